// Entry point: one page serves both roles, picked by URL hash.
//   #/desktop/<docId>/<userId>   coordinator editor
//   #/mobile/<userId>            field view
// Server base URL comes from ?server=, default same origin.

import { ServerApi } from "./api.js";
import { mountDesktop } from "./desktop.js";
import { mountMobile } from "./mobile.js";

function serverBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("server");
  return fromQuery ?? window.location.origin;
}

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) return;
  const parts = window.location.hash.replace(/^#\/?/, "").split("/");
  const api = new ServerApi(serverBase());
  if (parts[0] === "desktop" && parts[1] && parts[2]) {
    mountDesktop(root, api, decodeURIComponent(parts[1]), decodeURIComponent(parts[2]));
    return;
  }
  if (parts[0] === "mobile" && parts[1]) {
    mountMobile(root, api, decodeURIComponent(parts[1]), window.localStorage);
    return;
  }
  root.innerHTML = `
    <h1>sitrepsync</h1>
    <p>Pick a view:</p>
    <ul>
      <li><code>#/desktop/&lt;docId&gt;/&lt;userId&gt;</code> coordinator editor</li>
      <li><code>#/mobile/&lt;userId&gt;</code> field view</li>
    </ul>
    <p>Append <code>?server=http://host:port</code> when the API is elsewhere.</p>`;
}

window.addEventListener("hashchange", () => window.location.reload());
boot();
