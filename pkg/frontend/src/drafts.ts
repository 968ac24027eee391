/** Local draft persistence: nothing typed into the form is lost on reload or
 * network failure. One draft per (annotator, task). */

export interface Draft {
  label: number | null;
  selectedIndex: number | null;
  response: string;
}

const ANNOTATOR_KEY = "annotator_id";

function draftKey(annotator: string, hsId: string): string {
  return `draft:${annotator}:${hsId}`;
}

export class DraftStore {
  constructor(private storage: Storage) {}

  loadAnnotator(): string | null {
    return this.storage.getItem(ANNOTATOR_KEY);
  }

  saveAnnotator(id: string): void {
    this.storage.setItem(ANNOTATOR_KEY, id);
  }

  load(annotator: string, hsId: string): Draft | null {
    const raw = this.storage.getItem(draftKey(annotator, hsId));
    if (raw === null) return null;
    try {
      return JSON.parse(raw) as Draft;
    } catch {
      return null;
    }
  }

  save(annotator: string, hsId: string, draft: Draft): void {
    this.storage.setItem(draftKey(annotator, hsId), JSON.stringify(draft));
  }

  clear(annotator: string, hsId: string): void {
    this.storage.removeItem(draftKey(annotator, hsId));
  }
}
