"""Golden corpus for the graph query language: valid queries that must
parse (and survive a pretty-print round trip), and invalid queries with
the guaranteed failure kind."""

VALID_QUERIES = [
    "MATCH (a) RETURN a",
    "MATCH (a:GPE) RETURN a",
    "MATCH (a:GPE_UrbanArea_City) RETURN a.name",
    "match (a) return a.name",
    "MATCH (c:GPE_UrbanArea_City)-[:LocatedIn]->(g:GPE) RETURN c.name, g.name",
    "MATCH (a)-[e]->(b) RETURN a, e, b",
    "MATCH (a)-[e:LocatedIn]->(b) RETURN a.name LIMIT 5",
    "MATCH (a)<-[e:OccurredIn]-(b) RETURN b.name",
    "MATCH (a)-[e]-(b) RETURN a.name, b.name",
    "MATCH (a {name: 'Odessa'}) RETURN a.qid",
    "MATCH (a:GPE {name: 'Ukraine', qid: 'QF003'}) RETURN a",
    "MATCH (a {wounded: 2}) RETURN a.name",
    "MATCH (a {score: -1.5}) RETURN a",
    "MATCH (a)-[:LocatedIn]->(b)-[:AlliedWith]->(c) RETURN a, c",
    "MATCH (a)-[r1]->(b)-[r2]->(c)-[r3]->(a) RETURN a",
    "MATCH (a), (b) RETURN a.name, b.name",
    "MATCH (a)-[e]->(b), (c:PER) RETURN a, c",
    "MATCH (a) WHERE a.name = 'Odessa' RETURN a",
    "MATCH (a) WHERE a.name <> 'x' RETURN a",
    "MATCH (a) WHERE a.wounded > 1 RETURN a",
    "MATCH (a) WHERE a.wounded <= 2 AND a.name CONTAINS 'dess' RETURN a",
    "MATCH (a) WHERE a.name STARTS WITH 'Od' RETURN a.name",
    "MATCH (a) WHERE NOT a.name = 'x' RETURN a",
    "MATCH (a) WHERE a.x = 1 OR a.y = 2 AND NOT a.z = 3 RETURN a",
    "MATCH (a) WHERE (a.x = 1 OR a.y = 2) AND a.z < 3 RETURN a",
    "MATCH (a) WHERE 'Odessa' = a.name RETURN a",
    "MATCH (a) WHERE a.since >= '2021-01-01' RETURN a LIMIT 1",
    "MATCH (a:ConflictAttack_FirearmAttack)-[:OccurredIn]->(p) WHERE p.name = 'Odessa' RETURN a.type, p.name LIMIT 3",
    "MATCH (a)-[e]-(b) WHERE e.type = 'LocatedIn' RETURN e",
    "MATCH (_x)-[_e]->(_y) RETURN _x, _e, _y",
]

# (query text, failure kind) where kind is "syntax" or "validation"
INVALID_QUERIES = [
    ("", "syntax"),
    ("MATCH", "syntax"),
    ("MATCH (a RETURN a", "syntax"),
    ("MATCH (a)) RETURN a", "syntax"),
    ("MATCH a) RETURN a", "syntax"),
    ("MATCH (a) RETURN", "syntax"),
    ("MATCH (a) RETURN 5", "syntax"),
    ("MATCH (a)-->(b) RETURN a", "syntax"),
    ("MATCH (a)-[e->(b) RETURN a", "syntax"),
    ("MATCH (a)-[e]>(b) RETURN a", "syntax"),
    ("MATCH (a {name 'x'}) RETURN a", "syntax"),
    ("MATCH (a {name: }) RETURN a", "syntax"),
    ("MATCH (a) WHERE RETURN a", "syntax"),
    ("MATCH (a) WHERE a.name = RETURN a", "syntax"),
    ("MATCH (a) WHERE a.name LIKE 'x' RETURN a", "syntax"),
    ("MATCH (a) WHERE a.name STARTS 'x' RETURN a", "syntax"),
    ("MATCH (a) RETURN a LIMIT 'ten'", "syntax"),
    ("MATCH (a) RETURN a LIMIT 2.5", "syntax"),
    ("MATCH (a) RETURN a extra", "syntax"),
    ("MATCH (a) WHERE a.name = 'unterminated RETURN a", "syntax"),
    ("MATCH (a) RETURN b", "validation"),
    ("MATCH (a) WHERE b.name = 'x' RETURN a", "validation"),
    ("MATCH (a)-[e]->(b), (c)-[e]->(d) RETURN a", "validation"),
    ("MATCH (e)-[e]->(b) RETURN b", "validation"),
]
