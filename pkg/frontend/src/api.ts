// Typed client for the consultation service JSON contract. The console never
// reasons on its own: every displayed value comes out of these calls.

export type ValueKind = 'integer' | 'boolean' | 'string' | 'reference' | 'list' | 'unknown';

export interface Question {
  id: string;
  slot: string;
  prompt: string;
  kind: ValueKind;
  choices: unknown[] | null;
  violations?: string[];
}

export interface ResultPayload {
  kind: ValueKind;
  value: unknown;
  elem?: ValueKind;
}

export type SessionState = 'running' | 'awaiting_answer' | 'done' | 'failed';

export interface StepResponse {
  session: string;
  state: SessionState;
  question?: Question;
  result?: ResultPayload;
  error?: string;
}

export interface KbSlot {
  name: string;
  type: ValueKind | null;
  elem: ValueKind | null;
  prompt: string | null;
}

export interface KbFrame {
  name: string;
  parent: string | null;
  kind: string;
  slots: KbSlot[];
}

export interface KbResponse {
  frames: KbFrame[];
  version: string;
}

export interface TraceEvent {
  seq: number;
  kind: string;
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: { error?: string; expected?: string; violations?: string[] },
  ) {
    super(body.error ?? `HTTP ${status}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchFn: FetchLike,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    let body: unknown = null;
    const text = await response.text();
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = { error: text };
      }
    }
    if (!response.ok) {
      throw new ApiError(response.status, (body ?? {}) as ApiError['body']);
    }
    return body as T;
  }

  kb(): Promise<KbResponse> {
    return this.request<KbResponse>('/api/kb');
  }

  start(goal: string): Promise<StepResponse> {
    return this.request<StepResponse>('/api/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ goal }),
    });
  }

  answer(sessionId: string, questionId: string, value: unknown): Promise<StepResponse> {
    return this.request<StepResponse>(`/api/sessions/${sessionId}/answers`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ question_id: questionId, value }),
    });
  }

  trace(sessionId: string): Promise<{ events: TraceEvent[] }> {
    return this.request<{ events: TraceEvent[] }>(`/api/sessions/${sessionId}/trace`);
  }
}
