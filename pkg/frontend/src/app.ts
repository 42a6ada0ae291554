/** DOM wiring: cluster cards, drag-to-merge, staging panel, submit flow. */

import { fetchClusters, fetchSamples, fetchStatus, submitReview } from "./api";
import { Staging } from "./staging";
import type { BadCaseSample, ClusterView } from "./types";
import {
  buildPayload,
  describeAction,
  excludeAction,
  mergeAction,
  renameAction,
} from "./wire";

const staging = new Staging();
let census: ClusterView[] = [];
let iteration: number | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function root(): HTMLElement {
  return document.getElementById("app")!;
}

export async function boot(): Promise<void> {
  try {
    const status = await fetchStatus();
    iteration = status.pending_iteration;
  } catch {
    renderUnreachable();
    return;
  }
  if (iteration === null) {
    renderEmptyState();
    return;
  }
  try {
    census = await fetchClusters(iteration);
  } catch {
    renderUnreachable();
    return;
  }
  render();
}

function renderUnreachable(): void {
  root().replaceChildren(
    el("div", "banner error", "Review service unreachable."),
    (() => {
      const button = el("button", "", "Retry");
      button.onclick = () => void boot();
      return button;
    })(),
  );
}

function renderEmptyState(): void {
  root().replaceChildren(
    el("div", "banner", "No review pending. The pipeline is not blocked at a review gate."),
  );
}

function render(): void {
  const container = root();
  container.replaceChildren();
  container.append(el("h1", "", `Error-cluster review — iteration ${iteration}`));

  const layout = el("div", "layout");
  const cards = el("div", "cards");
  const sorted = [...census].sort((a, b) =>
    b.member_count - a.member_count || (a.id < b.id ? -1 : 1),
  );
  // flagged "unclustered" buckets pin to the top with a warning badge
  sorted.sort((a, b) => Number(b.flagged) - Number(a.flagged));
  for (const view of sorted) {
    cards.append(renderCard(view));
  }
  layout.append(cards, renderSidebar());
  container.append(layout);
}

function renderCard(view: ClusterView): HTMLElement {
  const card = el("div", `card status-${view.status}${view.flagged ? " flagged" : ""}`);
  card.dataset.clusterId = view.id;

  const header = el("div", "card-header");
  header.append(
    el("span", "name", view.name),
    el("span", "count", `${view.member_count} bad cases`),
  );
  if (view.flagged) header.append(el("span", "badge warn", "needs review"));
  if (view.status === "excluded") header.append(el("span", "badge", "excluded"));
  if (view.status === "merged") {
    header.append(el("span", "badge", `merged into ${view.merged_into ?? "?"}`));
  }
  card.append(header, el("div", "cluster-id", view.id));
  if (view.description) card.append(el("p", "description", view.description));

  const phrases = el("ul", "keyphrases");
  for (const kp of view.keyphrases.slice(0, 8)) {
    phrases.append(el("li", "", kp.count > 1 ? `${kp.phrase} ×${kp.count}` : kp.phrase));
  }
  if (view.keyphrases.length > 8) {
    phrases.append(el("li", "more", `… ${view.keyphrases.length - 8} more`));
  }
  card.append(phrases);

  const actions = el("div", "card-actions");
  const excludeButton = el("button", "", "Exclude");
  excludeButton.onclick = () => {
    const reason = window.prompt(`Why exclude "${view.name}"?`, "not a real error type");
    if (reason !== null) {
      staging.stage(excludeAction(view.id, reason));
      renderSidebarInPlace();
    }
  };
  const renameButton = el("button", "", "Rename");
  renameButton.onclick = () => {
    const name = window.prompt(`New name for "${view.name}":`, view.name);
    if (name !== null && name.trim()) {
      staging.stage(renameAction(view.id, name.trim()));
      renderSidebarInPlace();
    }
  };
  const samplesButton = el("button", "", "Samples");
  const sampleBox = el("div", "samples");
  samplesButton.onclick = async () => {
    if (sampleBox.childElementCount) {
      sampleBox.replaceChildren();
      return;
    }
    const samples = await fetchSamples(iteration!, view.id);
    sampleBox.replaceChildren(...samples.map(renderSample));
  };
  actions.append(excludeButton, renameButton, samplesButton);
  card.append(actions, sampleBox);

  // drag a card onto another to stage a merge (source merges into drop target)
  card.draggable = true;
  card.addEventListener("dragstart", (event) => {
    event.dataTransfer?.setData("text/cluster-id", view.id);
  });
  card.addEventListener("dragover", (event) => {
    event.preventDefault();
    card.classList.add("drop-target");
  });
  card.addEventListener("dragleave", () => card.classList.remove("drop-target"));
  card.addEventListener("drop", (event) => {
    event.preventDefault();
    card.classList.remove("drop-target");
    const sourceId = event.dataTransfer?.getData("text/cluster-id");
    if (sourceId && sourceId !== view.id) {
      const ok = window.confirm(`Merge ${sourceId} into ${view.id}?`);
      if (ok) {
        staging.stage(mergeAction([sourceId], view.id));
        renderSidebarInPlace();
      }
    }
  });
  return card;
}

function renderSample(sample: BadCaseSample): HTMLElement {
  const box = el("div", "sample");
  box.append(
    el("div", "question", sample.question),
    labelled("correct path", sample.reference_solution),
    labelled("model path", sample.model_reasoning),
  );
  const answers = el("div", "answers");
  answers.append(
    el("span", "answer good", `reference: ${sample.reference_answer}`),
    el("span", "answer bad", `model: ${sample.model_answer ?? "(no answer)"}`),
  );
  box.append(answers);
  return box;
}

function labelled(label: string, text: string): HTMLElement {
  const wrap = el("div", "labelled");
  wrap.append(el("span", "label", label), el("pre", "", text));
  return wrap;
}

function renderSidebar(): HTMLElement {
  const sidebar = el("div", "sidebar");
  sidebar.id = "sidebar";
  fillSidebar(sidebar);
  return sidebar;
}

function renderSidebarInPlace(): void {
  const sidebar = document.getElementById("sidebar");
  if (sidebar) fillSidebar(sidebar);
}

function fillSidebar(sidebar: HTMLElement): void {
  sidebar.replaceChildren(el("h2", "", "Staged decision"));
  const flags = staging.flags(census);
  const list = el("ol", "staged");
  staging.list().forEach((action, index) => {
    const item = el("li", flags[index].valid ? "valid" : "invalid");
    item.append(el("span", "", describeAction(action)));
    if (!flags[index].valid) item.append(el("span", "diagnostic", flags[index].message));
    const remove = el("button", "remove", "✕");
    remove.onclick = () => {
      staging.removeAt(index);
      renderSidebarInPlace();
    };
    item.append(remove);
    list.append(item);
  });
  if (!staging.list().length) {
    list.append(el("li", "empty", "nothing staged — submitting approves the census as-is"));
  }
  sidebar.append(list);

  const undoButton = el("button", "", "Undo");
  undoButton.disabled = !staging.list().length;
  undoButton.onclick = () => {
    staging.undo();
    renderSidebarInPlace();
  };

  const authorInput = el("input") as HTMLInputElement;
  authorInput.placeholder = "your name";
  authorInput.id = "author";
  authorInput.value = (document.getElementById("author") as HTMLInputElement | null)?.value ?? "";

  const submitButton = el("button", "submit", "Submit review");
  submitButton.disabled = !staging.canSubmit(census);
  submitButton.onclick = async () => {
    const payload = buildPayload(
      [...staging.list()],
      authorInput.value.trim(),
      new Date().toISOString(),
    );
    const outcome = await submitReview(iteration!, payload);
    if (outcome.kind === "accepted") {
      root().replaceChildren(
        el("div", "banner ok",
           `Review accepted (${outcome.body.actions} actions). The pipeline gate is released.`),
      );
    } else if (outcome.kind === "rejected") {
      staging.applyServerRejection(outcome.body.diagnostics);
      renderSidebarInPlace();
    } else {
      const reload = window.confirm(`${outcome.detail}. Reload the census?`);
      if (reload) void boot();
    }
  };

  sidebar.append(el("div", "hint", "Drag one card onto another to stage a merge."),
                 authorInput, undoButton, submitButton);
}
