/**
 * Application wiring: session, stores, event stream, canvas, document view.
 *
 * All workspace truth lives server-side; closing and reopening the UI
 * against the same session reproduces the same content and layout.
 */

import { ApiClient, EventStream } from "./client.js";
import { WorkspaceCanvas } from "./canvas.js";
import { WorkspaceController } from "./controller.js";
import { DocumentViewer } from "./docview.js";
import { ViewState, WorkspaceStore } from "./store.js";

export interface AppOptions {
  base?: string;
  workspace?: string;
}

export async function boot(root: HTMLElement,
                           options: AppOptions = {}): Promise<WorkspaceController> {
  const base = options.base ?? "";
  const client = new ApiClient(base);
  const session = await client.openSession(options.workspace ?? "workspace.json");
  const store = new WorkspaceStore();
  const view = new ViewState();
  const controller = new WorkspaceController(client, session.session_id, store, view);

  const canvas = new WorkspaceCanvas(root, controller);
  const docview = new DocumentViewer(controller);
  root.appendChild(docview.element);
  root.addEventListener("ls-open-document", ((event: CustomEvent) => {
    docview.open(event.detail.docId);
  }) as EventListener);

  const toolbar = buildWorkspaceToolbar(controller);
  root.appendChild(toolbar);

  const stream = new EventStream(base, session.session_id, {
    onEvent: (event) => {
      store.ingest(event);
      canvas.handleEvent(event);
    },
    onStatus: (status) => {
      canvas.setConnection(status);
      if (status === "open" && store.snapshot) {
        // Reconnected: close any gap with a since-revision delta.
        void controller.resync();
      }
    },
  });
  void stream.run();

  await controller.refresh();
  canvas.render();
  return controller;
}

/** Workspace-level toolbar: add layers, templates, stack, compile. */
function buildWorkspaceToolbar(controller: WorkspaceController): HTMLElement {
  const bar = document.createElement("div");
  bar.className = "ls-workspace-toolbar";
  const actions: [string, () => Promise<unknown>][] = [
    ["+ layer", async () => {
      const name = window.prompt("Layer name:", "Untitled") ?? "";
      if (name) await controller.beginWriting(name);
    }],
    ["+ scratchpad", async () => {
      const name = window.prompt("Scratchpad name:", "Research") ?? "";
      if (name) await controller.newScratchpad(name);
    }],
    ["meta", async () => {
      const purpose = window.prompt("Purpose:", "") ?? "";
      const audience = window.prompt("Audience:", "") ?? "";
      const intent = window.prompt("Intent:", "") ?? "";
      await controller.editMeta({ purpose, audience, intent });
    }],
    ["argument template", async () => {
      const layerId = window.prompt("Partition which layer id?", "") ?? "";
      if (layerId) {
        await controller.client.op(controller.sid, "apply-template",
          { template_id: "argument", layer_id: layerId, wait: true });
      }
    }],
    ["stack selection", async () => {
      const ids = [...controller.view.selected];
      if (ids.length >= 2) await controller.stackSelection(ids);
    }],
    ["compile", async () => {
      const ids = window.prompt("Compile layer ids (comma separated):", "") ?? "";
      const members = ids.split(",").map((s) => s.trim()).filter(Boolean);
      if (members.length) await controller.compile(members);
    }],
  ];
  for (const [label, action] of actions) {
    const button = document.createElement("button");
    button.textContent = label;
    button.addEventListener("click", () => { void action(); });
    bar.appendChild(button);
  }
  return bar;
}
