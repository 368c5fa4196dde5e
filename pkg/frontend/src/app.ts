/** Analyst console: chat with citation chips, evidence-graph viewer,
 * provenance drill-down, and an embedding-projection scatter. All state
 * lives in SessionState; the server is consulted only through ApiClient.
 */

import { ApiClient, ApiError, Citation, Evidence, Level, LEVELS, NodeDetail, QueryResult } from "./api.js";
import { answerFragments, chipLabel } from "./citations.js";
import { layoutGraph, rootTypeColor } from "./force.js";
import { scalePoints } from "./scatter.js";
import { SessionState } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly doc: Document;
  private chatLog!: HTMLElement;
  private queryInput!: HTMLInputElement;
  private levelSelect!: HTMLSelectElement;
  private banner!: HTMLElement;
  private evidencePane!: HTMLElement;
  private projectionPane!: HTMLElement;
  private provenancePane!: HTMLElement;
  private chunkModal!: HTMLElement;
  private busy = false;
  private projectionLoaded = false;

  constructor(
    private root: HTMLElement,
    private client: ApiClient,
    readonly state: SessionState,
  ) {
    this.doc = root.ownerDocument;
    this.renderSkeleton();
  }

  // -- skeleton -----------------------------------------------------------

  private renderSkeleton(): void {
    const doc = this.doc;
    this.root.textContent = "";

    const header = el(doc, "header", { class: "topbar" });
    header.appendChild(el(doc, "span", { class: "brand" }, "kgrag console"));
    this.levelSelect = el(doc, "select", { "data-testid": "level-select", title: "augmentation level" });
    for (const level of LEVELS) {
      const option = el(doc, "option", { value: level }, level);
      if (level === this.state.level) option.setAttribute("selected", "selected");
      this.levelSelect.appendChild(option);
    }
    this.levelSelect.addEventListener("change", () => {
      this.state.level = this.levelSelect.value as Level;
    });
    header.appendChild(this.levelSelect);
    this.banner = el(doc, "div", { class: "banner hidden", "data-testid": "banner" });
    header.appendChild(this.banner);
    this.root.appendChild(header);

    const main = el(doc, "main", { class: "split" });

    const chat = el(doc, "section", { class: "chat" });
    this.chatLog = el(doc, "div", { class: "chat-log", "data-testid": "chat-log" });
    chat.appendChild(this.chatLog);
    const form = el(doc, "form", { class: "ask", "data-testid": "ask-form" });
    this.queryInput = el(doc, "input", {
      type: "text",
      placeholder: "Ask about the curated corpus...",
      "data-testid": "query-input",
    });
    const button = el(doc, "button", { type: "submit" }, "Ask");
    form.appendChild(this.queryInput);
    form.appendChild(button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const q = this.queryInput.value.trim();
      if (q) void this.submitQuery(q);
    });
    chat.appendChild(form);
    main.appendChild(chat);

    const side = el(doc, "section", { class: "side" });
    const tabs = el(doc, "div", { class: "tabs" });
    const evidenceTab = el(doc, "button", { "data-testid": "tab-evidence", class: "tab active" }, "Evidence");
    const projectionTab = el(doc, "button", { "data-testid": "tab-projection", class: "tab" }, "Projection");
    tabs.appendChild(evidenceTab);
    tabs.appendChild(projectionTab);
    side.appendChild(tabs);
    this.evidencePane = el(doc, "div", { class: "pane", "data-testid": "evidence-pane" });
    this.projectionPane = el(doc, "div", { class: "pane hidden", "data-testid": "projection-pane" });
    side.appendChild(this.evidencePane);
    side.appendChild(this.projectionPane);
    evidenceTab.addEventListener("click", () => {
      evidenceTab.classList.add("active");
      projectionTab.classList.remove("active");
      this.evidencePane.classList.remove("hidden");
      this.projectionPane.classList.add("hidden");
    });
    projectionTab.addEventListener("click", () => {
      projectionTab.classList.add("active");
      evidenceTab.classList.remove("active");
      this.projectionPane.classList.remove("hidden");
      this.evidencePane.classList.add("hidden");
      void this.loadProjection();
    });
    this.provenancePane = el(doc, "aside", { class: "provenance hidden", "data-testid": "provenance-pane" });
    side.appendChild(this.provenancePane);
    main.appendChild(side);
    this.root.appendChild(main);

    this.chunkModal = el(doc, "div", { class: "modal hidden", "data-testid": "chunk-modal" });
    this.chunkModal.addEventListener("click", () => this.chunkModal.classList.add("hidden"));
    this.root.appendChild(this.chunkModal);

    this.evidencePane.appendChild(
      el(doc, "p", { class: "placeholder" }, "Evidence for the latest answer appears here."),
    );
  }

  private showBanner(text: string): void {
    this.banner.textContent = text;
    this.banner.classList.remove("hidden");
  }

  private clearBanner(): void {
    this.banner.classList.add("hidden");
    this.banner.textContent = "";
  }

  // -- chat flow -----------------------------------------------------------

  async submitQuery(q: string): Promise<QueryResult | null> {
    if (this.busy) return null;
    this.busy = true;
    this.clearBanner();
    try {
      const result = await this.client.query(q, this.state.level);
      this.state.push(q, result);
      this.renderAnswerCard(q, result);
      this.renderEvidence(result.evidence);
      if (typeof history !== "undefined" && typeof history.replaceState === "function") {
        history.replaceState(null, "", `?${SessionState.toParams(q, this.state.level)}`);
      }
      return result;
    } catch (err) {
      const detail = err instanceof ApiError ? `${err.status}` : String(err);
      this.showBanner(`query failed (${detail}) - retry?`);
      return null;
    } finally {
      this.busy = false;
    }
  }

  private renderAnswerCard(q: string, result: QueryResult): void {
    const doc = this.doc;
    const card = el(doc, "article", { class: "card", "data-testid": "answer-card" });
    card.appendChild(el(doc, "div", { class: "asked" }, q));
    const body = el(doc, "div", { class: "answer" });
    for (const fragment of answerFragments(result)) {
      if (fragment.kind === "text") {
        body.appendChild(doc.createTextNode(fragment.text));
      } else {
        body.appendChild(this.renderChip(fragment.citation));
      }
    }
    card.appendChild(body);
    card.appendChild(
      el(doc, "div", { class: "meta" },
         `level ${result.level} - ${result.citations.length} citations`),
    );
    this.chatLog.appendChild(card);
  }

  private renderChip(citation: Citation): HTMLElement {
    const chip = el(this.doc, "button", {
      class: `chip chip-${citation.kind}`,
      "data-testid": "citation-chip",
      "data-kind": citation.kind,
      "data-id": citation.id,
    }, chipLabel(citation));
    chip.addEventListener("click", () => void this.openCitation(citation));
    return chip;
  }

  async openCitation(citation: Citation): Promise<void> {
    try {
      if (citation.kind === "chunk") {
        const chunk = await this.client.chunk(citation.id);
        this.openChunkModal(`${chunk.chunk_id} (doc ${chunk.doc_id})`, chunk.text);
      } else if (citation.kind === "node") {
        await this.openProvenance(citation.id);
      } else {
        this.showBanner(`edge ${citation.id} is highlighted in the evidence view`);
      }
    } catch (err) {
      this.showBanner(`could not resolve citation ${citation.kind}:${citation.id} (${String(err)})`);
    }
  }

  private openChunkModal(title: string, text: string): void {
    this.chunkModal.textContent = "";
    const box = el(this.doc, "div", { class: "modal-box" });
    box.appendChild(el(this.doc, "h3", {}, title));
    box.appendChild(el(this.doc, "pre", { "data-testid": "chunk-text" }, text));
    this.chunkModal.appendChild(box);
    this.chunkModal.classList.remove("hidden");
  }

  // -- provenance ------------------------------------------------------------

  async openProvenance(nodeId: string): Promise<NodeDetail> {
    const detail = await this.client.node(nodeId);
    this.state.selectedNode = nodeId;
    const doc = this.doc;
    this.provenancePane.textContent = "";
    this.provenancePane.classList.remove("hidden");
    this.provenancePane.appendChild(el(doc, "h3", {}, `${detail.name} (${detail.type})`));
    if (detail.qid) {
      this.provenancePane.appendChild(el(doc, "div", { class: "qid" }, `qid ${detail.qid}`));
    }
    if (detail.attributes.length) {
      const attrs = el(doc, "ul", { class: "attrs" });
      for (const attr of detail.attributes) {
        attrs.appendChild(el(doc, "li", {}, `${attr.key} = ${attr.value} (${attr.source_doc_id})`));
      }
      this.provenancePane.appendChild(attrs);
    }
    const title = el(doc, "h4", {}, "provenance");
    this.provenancePane.appendChild(title);
    const list = el(doc, "ul", { class: "prov-list", "data-testid": "provenance-list" });
    for (const record of detail.provenance) {
      const item = el(doc, "li", {});
      const link = el(doc, "button", {
        class: "chunk-link",
        "data-testid": "provenance-chunk",
        "data-chunk": record.chunk_id,
      }, record.chunk_id);
      link.addEventListener("click", () => void this.openCitation({ kind: "chunk", id: record.chunk_id }));
      item.appendChild(link);
      item.appendChild(el(doc, "span", { class: "mention" }, ` "${record.mention}"`));
      list.appendChild(item);
    }
    this.provenancePane.appendChild(list);
    return detail;
  }

  // -- evidence graph -----------------------------------------------------------

  renderEvidence(evidence: Evidence): void {
    const doc = this.doc;
    this.evidencePane.textContent = "";
    if (!evidence.nodes.length) {
      this.evidencePane.appendChild(
        el(doc, "p", { class: "placeholder", "data-testid": "evidence-empty" },
           "No graph evidence for this answer."),
      );
      return;
    }
    const MAX_RENDERED = 200;
    let nodes = evidence.nodes;
    if (nodes.length > MAX_RENDERED) {
      nodes = nodes.slice(0, MAX_RENDERED);
      this.evidencePane.appendChild(
        el(doc, "p", { class: "notice" }, `showing first ${MAX_RENDERED} of ${evidence.nodes.length} nodes`),
      );
    }
    const width = 520;
    const height = 420;
    const points = layoutGraph(nodes, evidence.edges, width, height);
    const byId = new Map(points.map((p) => [p.id, p]));
    const svg = doc.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    svg.setAttribute("data-testid", "evidence-svg");
    for (const edge of evidence.edges) {
      const a = byId.get(edge.source);
      const b = byId.get(edge.target);
      if (!a || !b) continue;
      const line = doc.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(a.x));
      line.setAttribute("y1", String(a.y));
      line.setAttribute("x2", String(b.x));
      line.setAttribute("y2", String(b.y));
      line.setAttribute("class", "edge");
      const label = doc.createElementNS(SVG_NS, "title");
      label.textContent = edge.type;
      line.appendChild(label);
      svg.appendChild(line);
    }
    for (const node of nodes) {
      const point = byId.get(node.id);
      if (!point) continue;
      const group = doc.createElementNS(SVG_NS, "g");
      group.setAttribute("class", "node");
      group.setAttribute("data-testid", "evidence-node");
      group.setAttribute("data-id", node.id);
      const circle = doc.createElementNS(SVG_NS, "circle");
      circle.setAttribute("cx", String(point.x));
      circle.setAttribute("cy", String(point.y));
      circle.setAttribute("r", "10");
      circle.setAttribute("fill", rootTypeColor(node.type));
      group.appendChild(circle);
      const text = doc.createElementNS(SVG_NS, "text");
      text.setAttribute("x", String(point.x + 12));
      text.setAttribute("y", String(point.y + 4));
      text.textContent = node.name;
      group.appendChild(text);
      group.addEventListener("click", () => void this.openProvenance(node.id));
      svg.appendChild(group);
    }
    this.evidencePane.appendChild(svg);
  }

  // -- projection -----------------------------------------------------------------

  async loadProjection(): Promise<void> {
    if (this.projectionLoaded) return;
    const doc = this.doc;
    this.projectionPane.textContent = "";
    let points;
    try {
      points = await this.client.projection();
    } catch (err) {
      this.projectionPane.appendChild(
        el(doc, "p", { class: "placeholder", "data-testid": "projection-disabled" },
           "Projection unavailable (needs at least 3 indexed records)."),
      );
      return;
    }
    this.projectionLoaded = true;
    const width = 520;
    const height = 420;
    const svg = doc.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    svg.setAttribute("data-testid", "projection-svg");
    for (const point of scalePoints(points, width, height)) {
      const circle = doc.createElementNS(SVG_NS, "circle");
      circle.setAttribute("cx", String(point.px));
      circle.setAttribute("cy", String(point.py));
      circle.setAttribute("r", "5");
      circle.setAttribute("class", "dot");
      circle.setAttribute("data-testid", "projection-point");
      const tooltip = doc.createElementNS(SVG_NS, "title");
      tooltip.textContent = `${point.id}: ${point.text}`;
      circle.appendChild(tooltip);
      svg.appendChild(circle);
    }
    this.projectionPane.appendChild(svg);
  }
}

export function initApp(root: HTMLElement, client: ApiClient, state: SessionState): App {
  return new App(root, client, state);
}
