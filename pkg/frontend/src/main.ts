// Browser bootstrap: paste a design document, create a session, optimize.

import { OffcutClient } from "./api.js";
import { App } from "./app.js";

async function boot() {
  const root = document.getElementById("app");
  if (!root) return;
  const client = new OffcutClient("");
  const textarea = document.getElementById("design-input") as HTMLTextAreaElement;
  const start = document.getElementById("start") as HTMLButtonElement;
  start.addEventListener("click", () => {
    void (async () => {
      const sid = await client.createSession(textarea.value);
      const app = new App(client, sid, root);
      await app.refreshDesign();
      const optimize = document.getElementById("optimize") as HTMLButtonElement;
      optimize.addEventListener("click", () => void app.runOptimize({ workers: 1 }));
      optimize.disabled = false;
    })();
  });
}

void boot();
