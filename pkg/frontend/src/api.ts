/** Typed client for the annotation service HTTP API. */

export interface Candidate {
  text: string;
  energy?: number | null;
  backend_id?: string | null;
  iteration?: number;
}

export interface Task {
  hs_id: string;
  hs_text: string;
  candidates: Candidate[];
  status?: string;
}

export interface AnnotationPayload {
  hs_id: string;
  annotator_id: string;
  hate_label: number;
  selected_index: number | null;
  edited_response: string | null;
}

export interface Progress {
  total_pairs: number;
  by_status: Record<string, number>;
  by_label: Record<string, number>;
  annotations: number;
}

export class ValidationError extends Error {
  constructor(public errors: Record<string, string>) {
    super(Object.values(errors).join("; "));
  }
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async fetchNextTask(annotator: string): Promise<Task | null> {
    const resp = await fetch(
      `${this.baseUrl}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (!resp.ok) throw new Error(`task fetch failed: HTTP ${resp.status}`);
    const body = (await resp.json()) as { task: Task | null };
    return body.task;
  }

  async submit(payload: AnnotationPayload): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/api/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (resp.status === 400) {
      const body = (await resp.json()) as { errors?: Record<string, string> };
      throw new ValidationError(body.errors ?? { annotation: "rejected" });
    }
    if (!resp.ok) throw new Error(`submit failed: HTTP ${resp.status}`);
  }

  async progress(): Promise<Progress> {
    const resp = await fetch(`${this.baseUrl}/api/progress`);
    if (!resp.ok) throw new Error(`progress failed: HTTP ${resp.status}`);
    return (await resp.json()) as Progress;
  }
}
