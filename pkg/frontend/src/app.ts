/** Annotation single-page app: label a hate-speech sentence (1 / -1 / 0),
 * pick one of four ranked counterspeech candidates, edit it, submit.
 *
 * Submit stays locked while label=1 and the response box is empty, mirroring
 * the server-side rule that confirmed hate speech needs a counterspeech. All
 * in-progress input is drafted to local storage, so transient network
 * failures and page reloads lose nothing.
 */

import { AnnotationPayload, ApiClient, Task, ValidationError } from "./api.js";
import { DraftStore } from "./drafts.js";

export interface AppOptions {
  root: HTMLElement;
  baseUrl?: string;
  storage?: Storage;
  /** Injectable confirm() so scripted tests can answer the overwrite prompt. */
  confirmFn?: (message: string) => boolean;
}

type Screen = "annotator" | "loading" | "task" | "done" | "error";

export class AnnotatorApp {
  readonly api: ApiClient;
  readonly drafts: DraftStore;
  private root: HTMLElement;
  private confirmFn: (message: string) => boolean;

  annotator: string | null = null;
  task: Task | null = null;
  screen: Screen = "annotator";
  label: number | null = null;
  selectedIndex: number | null = null;
  /** Response text has been hand-edited since the last candidate copy. */
  dirty = false;

  constructor(options: AppOptions) {
    this.root = options.root;
    this.api = new ApiClient(options.baseUrl ?? "");
    this.drafts = new DraftStore(options.storage ?? window.localStorage);
    this.confirmFn =
      options.confirmFn ?? ((message: string) => window.confirm(message));
  }

  async start(): Promise<void> {
    this.annotator = this.drafts.loadAnnotator();
    if (this.annotator === null) {
      this.screen = "annotator";
      this.render();
      return;
    }
    await this.loadNext();
  }

  async setAnnotator(id: string): Promise<void> {
    const trimmed = id.trim();
    if (!trimmed) return;
    this.annotator = trimmed;
    this.drafts.saveAnnotator(trimmed);
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.screen = "loading";
    this.render();
    try {
      this.task = await this.api.fetchNextTask(this.annotator!);
    } catch {
      // keep whatever the annotator was working on; only show a retry banner
      this.screen = this.task ? "task" : "error";
      this.render(this.task ? "连接失败，稍后重试 / network error, retry later" : undefined);
      return;
    }
    if (this.task === null) {
      this.screen = "done";
      this.render();
      return;
    }
    const draft = this.drafts.load(this.annotator!, this.task.hs_id);
    this.label = draft?.label ?? null;
    this.selectedIndex = draft?.selectedIndex ?? null;
    this.dirty = false;
    this.screen = "task";
    this.render();
    if (draft) this.responseBox().value = draft.response;
    this.refreshSubmitState();
  }

  selectCandidate(index: number): void {
    if (!this.task) return;
    const candidate = this.task.candidates[index - 1];
    if (!candidate) return;
    const box = this.responseBox();
    if (this.dirty && box.value.trim() !== "" && box.value !== candidate.text) {
      const ok = this.confirmFn(
        "覆盖已编辑的回应？ / Replace your edited response?",
      );
      if (!ok) return;
    }
    this.selectedIndex = index;
    box.value = candidate.text;
    this.dirty = false;
    this.persistDraft();
    this.refreshSubmitState();
    this.root
      .querySelectorAll(".candidate")
      .forEach((el, i) => el.classList.toggle("selected", i === index - 1));
  }

  setLabel(value: number): void {
    this.label = value;
    this.persistDraft();
    this.refreshSubmitState();
  }

  onResponseInput(): void {
    const box = this.responseBox();
    const selected =
      this.selectedIndex !== null && this.task
        ? this.task.candidates[this.selectedIndex - 1]?.text
        : undefined;
    this.dirty = box.value !== selected;
    this.persistDraft();
    this.refreshSubmitState();
  }

  submitLocked(): boolean {
    if (this.label === null) return true;
    if (this.label === 1 && this.responseBox().value.trim() === "") return true;
    return false;
  }

  async submit(): Promise<void> {
    if (!this.task || this.submitLocked()) return;
    const response = this.responseBox().value;
    const payload: AnnotationPayload = {
      hs_id: this.task.hs_id,
      annotator_id: this.annotator!,
      hate_label: this.label!,
      selected_index: this.selectedIndex,
      edited_response: response === "" ? null : response,
    };
    try {
      await this.api.submit(payload);
    } catch (err) {
      if (err instanceof ValidationError) {
        this.showErrors(err.errors);
      } else {
        this.banner("提交失败，草稿已保存 / submit failed, draft kept");
      }
      return; // state intact either way
    }
    this.drafts.clear(this.annotator!, this.task.hs_id);
    await this.loadNext();
  }

  // -- internals ----------------------------------------------------------

  private persistDraft(): void {
    if (!this.task || !this.annotator) return;
    this.drafts.save(this.annotator, this.task.hs_id, {
      label: this.label,
      selectedIndex: this.selectedIndex,
      response: this.responseBox().value,
    });
  }

  private responseBox(): HTMLTextAreaElement {
    return this.root.querySelector("#response") as HTMLTextAreaElement;
  }

  private refreshSubmitState(): void {
    const button = this.root.querySelector("#submit") as HTMLButtonElement | null;
    if (button) button.disabled = this.submitLocked();
  }

  private banner(message: string): void {
    const el = this.root.querySelector("#banner");
    if (el) {
      el.textContent = message;
      el.classList.remove("hidden");
    }
  }

  private showErrors(errors: Record<string, string>): void {
    const el = this.root.querySelector("#errors");
    if (el) {
      el.textContent = Object.entries(errors)
        .map(([field, msg]) => `${field}: ${msg}`)
        .join("\n");
      el.classList.remove("hidden");
    }
  }

  private render(bannerMessage?: string): void {
    switch (this.screen) {
      case "annotator":
        this.root.innerHTML = `
          <form id="annotator-form">
            <label>标注者编号 / annotator ID
              <input id="annotator-input" type="text" autocomplete="off">
            </label>
            <button type="submit">开始 / start</button>
          </form>`;
        (this.root.querySelector("#annotator-form") as HTMLFormElement).addEventListener(
          "submit",
          (ev) => {
            ev.preventDefault();
            const input = this.root.querySelector("#annotator-input") as HTMLInputElement;
            void this.setAnnotator(input.value);
          },
        );
        return;
      case "loading":
        this.root.innerHTML = `<p id="loading">加载中 / loading…</p>`;
        return;
      case "done":
        this.root.innerHTML = `<p id="done">全部完成，感谢标注！ / all tasks done</p>`;
        return;
      case "error":
        this.root.innerHTML = `
          <div id="banner" class="error"></div>
          <button id="retry">重试 / retry</button>`;
        this.banner(bannerMessage ?? "network error");
        (this.root.querySelector("#retry") as HTMLButtonElement).addEventListener(
          "click",
          () => void this.loadNext(),
        );
        return;
      case "task":
        break;
    }

    const task = this.task!;
    const candidates = task.candidates
      .slice(0, 4)
      .map(
        (c, i) => `
        <div class="candidate" data-index="${i + 1}">
          <div class="candidate-text"></div>
          <button type="button" class="select">选用 ${i + 1} / use ${i + 1}</button>
        </div>`,
      )
      .join("");
    this.root.innerHTML = `
      <div id="banner" class="hidden"></div>
      <section id="hs">
        <h2>待判定句子 / sentence</h2>
        <p id="hs-text"></p>
      </section>
      <section id="labels">
        <label><input type="radio" name="label" value="1"> 1 仇恨言论 / hate speech</label>
        <label><input type="radio" name="label" value="-1"> -1 反驳言论 / counterspeech</label>
        <label><input type="radio" name="label" value="0"> 0 两者皆非 / neither</label>
      </section>
      <section id="candidates">${candidates}</section>
      <section id="editor">
        <textarea id="response" rows="4" placeholder="最佳回应 / best response"></textarea>
        <pre id="errors" class="hidden error"></pre>
        <button id="submit" disabled>提交 / submit</button>
      </section>`;

    // text nodes set via textContent so line breaks and markup render verbatim
    (this.root.querySelector("#hs-text") as HTMLElement).textContent = task.hs_text;
    this.root.querySelectorAll(".candidate").forEach((el, i) => {
      (el.querySelector(".candidate-text") as HTMLElement).textContent =
        task.candidates[i]?.text ?? "";
      (el.querySelector("button.select") as HTMLButtonElement).addEventListener(
        "click",
        () => this.selectCandidate(i + 1),
      );
    });
    this.root.querySelectorAll<HTMLInputElement>("input[name=label]").forEach((radio) => {
      radio.addEventListener("change", () => this.setLabel(Number(radio.value)));
      if (this.label !== null && Number(radio.value) === this.label) {
        radio.checked = true;
      }
    });
    this.responseBox().addEventListener("input", () => this.onResponseInput());
    (this.root.querySelector("#submit") as HTMLButtonElement).addEventListener(
      "click",
      () => void this.submit(),
    );
    if (bannerMessage) this.banner(bannerMessage);
    if (this.selectedIndex !== null) {
      this.root
        .querySelectorAll(".candidate")
        .forEach((el, i) => el.classList.toggle("selected", i === this.selectedIndex! - 1));
    }
  }
}
