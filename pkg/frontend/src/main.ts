/** Browser entry point: wire the app to the DOM and URL parameters.
 * The API base defaults to same-origin and can be overridden at runtime
 * with ?api=http://host:port. */

import { ApiClient } from "./api.js";
import { initApp } from "./app.js";
import { SessionState } from "./state.js";

const params = SessionState.fromParams(window.location.search);
const client = new ApiClient(params.api ?? "");
const state = new SessionState();
if (params.level) state.level = params.level;

const root = document.getElementById("app");
if (root) {
  const app = initApp(root, client, state);
  if (params.q) {
    const input = root.querySelector<HTMLInputElement>("[data-testid=query-input]");
    if (input) input.value = params.q;
    void app.submitQuery(params.q);
  }
}
