// Console state machine. The phases mirror the server's session states; a
// stale question is never shown because every accepted answer replaces the
// whole view state from the server response.

import {
  ApiClient,
  ApiError,
  KbFrame,
  Question,
  ResultPayload,
  StepResponse,
  TraceEvent,
  ValueKind,
} from './api.js';

export type Phase = 'choosing_goal' | 'answering' | 'done' | 'failed';

export interface HistoryEntry {
  slot: string;
  prompt: string;
  value: unknown;
}

export interface ViewState {
  phase: Phase;
  goals: string[];
  goalsLoaded: boolean;
  goal: string | null;
  sessionId: string | null;
  question: Question | null;
  history: HistoryEntry[];
  result: ResultPayload | null;
  banner: string | null;      // connectivity / fatal errors, with retry
  fieldError: string | null;  // inline validation under the input
  violations: string[];
  expired: boolean;           // offer a restart
  busy: boolean;
  traceOpen: boolean;
  trace: TraceEvent[];
}

export function initialState(): ViewState {
  return {
    phase: 'choosing_goal',
    goals: [],
    goalsLoaded: false,
    goal: null,
    sessionId: null,
    question: null,
    history: [],
    result: null,
    banner: null,
    fieldError: null,
    violations: [],
    expired: false,
    busy: false,
    traceOpen: false,
    trace: [],
  };
}

export class Store {
  private state = initialState();
  private listeners: Array<(s: ViewState) => void> = [];

  get(): ViewState {
    return this.state;
  }

  set(patch: Partial<ViewState>) {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: (s: ViewState) => void) {
    this.listeners.push(listener);
  }
}

const INT64_MAX = 9223372036854775807n;
const INT64_MIN = -9223372036854775808n;

export type Validation = { ok: true; value: unknown } | { ok: false; message: string };

// Client-side kind validation mirrors the server rules so most bad input
// never becomes a request.
export function validateInput(text: string, kind: ValueKind): Validation {
  const trimmed = text.trim();
  switch (kind) {
    case 'integer': {
      if (!/^-?\d+$/.test(trimmed)) {
        return { ok: false, message: 'expected an integer' };
      }
      const big = BigInt(trimmed);
      if (big > INT64_MAX || big < INT64_MIN) {
        return { ok: false, message: 'outside the 64-bit integer range' };
      }
      if (big > BigInt(Number.MAX_SAFE_INTEGER) || big < -BigInt(Number.MAX_SAFE_INTEGER)) {
        return { ok: false, message: 'too large to submit exactly' };
      }
      return { ok: true, value: Number(trimmed) };
    }
    case 'boolean':
      if (trimmed === 'true') return { ok: true, value: true };
      if (trimmed === 'false') return { ok: true, value: false };
      return { ok: false, message: 'expected true or false' };
    case 'reference':
      if (!trimmed) return { ok: false, message: 'expected a frame name' };
      return { ok: true, value: trimmed };
    case 'list':
      try {
        const parsed = JSON.parse(trimmed);
        if (!Array.isArray(parsed)) return { ok: false, message: 'expected a JSON list' };
        return { ok: true, value: parsed };
      } catch {
        return { ok: false, message: 'expected a JSON list like [1, 2]' };
      }
    default:
      return { ok: true, value: text };
  }
}

export function goalOptions(frames: KbFrame[]): string[] {
  // a frame can be consulted about inherited slots too: offer the slots of
  // the whole static chain, nearest declaration first
  const byName = new Map(frames.map((f) => [f.name, f]));
  const goals: string[] = [];
  for (const frame of frames) {
    const seen = new Set<string>();
    let current: KbFrame | undefined = frame;
    const visited = new Set<string>();
    while (current && !visited.has(current.name)) {
      visited.add(current.name);
      for (const slot of current.slots) {
        if (!seen.has(slot.name)) {
          seen.add(slot.name);
          goals.push(`${frame.name}.${slot.name}`);
        }
      }
      current = current.parent ? byName.get(current.parent) : undefined;
    }
  }
  return goals;
}

export function renderValue(result: ResultPayload): string {
  if (result.kind === 'unknown' || result.value === null) return 'unknown';
  if (Array.isArray(result.value)) return `[${result.value.join(', ')}]`;
  return String(result.value);
}

// One operation per user action: each method issues at most one request.
export class Consultation {
  constructor(
    private api: ApiClient,
    public store: Store,
  ) {}

  async loadGoals() {
    this.store.set({ busy: true, banner: null });
    try {
      const kb = await this.api.kb();
      this.store.set({ goals: goalOptions(kb.frames), goalsLoaded: true, busy: false });
    } catch (e) {
      this.store.set({ busy: false, banner: describe(e) });
    }
  }

  async start(goal: string) {
    this.store.set({ busy: true, banner: null, goal });
    try {
      const step = await this.api.start(goal);
      this.applyStep(step);
    } catch (e) {
      this.store.set({ busy: false, banner: describe(e) });
    }
  }

  async submit(rawText: string, choiceValue?: unknown) {
    const state = this.store.get();
    const q = state.question;
    if (state.phase !== 'answering' || !q || !state.sessionId) return;
    let value: unknown;
    if (choiceValue !== undefined) {
      value = choiceValue;
    } else {
      const checked = validateInput(rawText, q.kind);
      if (!checked.ok) {
        this.store.set({ fieldError: checked.message });
        return; // no request: the input never leaves the console
      }
      value = checked.value;
    }
    this.store.set({ busy: true, fieldError: null, violations: [] });
    try {
      const step = await this.api.answer(state.sessionId, q.id, value);
      this.store.set({
        history: [...state.history, { slot: q.slot, prompt: q.prompt, value }],
      });
      this.applyStep(step);
    } catch (e) {
      if (e instanceof ApiError && e.status === 422) {
        this.store.set({
          busy: false,
          fieldError: e.body.expected
            ? `expected ${e.body.expected}`
            : (e.body.error ?? 'rejected'),
          violations: e.body.violations ?? [],
        });
        return;
      }
      if (e instanceof ApiError && (e.status === 404 || e.status === 409)) {
        this.store.set({ busy: false, expired: true });
        return;
      }
      this.store.set({ busy: false, banner: describe(e) });
    }
  }

  async toggleTrace() {
    const state = this.store.get();
    if (state.traceOpen) {
      this.store.set({ traceOpen: false });
      return;
    }
    if (!state.sessionId) return;
    try {
      const trace = await this.api.trace(state.sessionId);
      this.store.set({ traceOpen: true, trace: trace.events });
    } catch (e) {
      this.store.set({ banner: describe(e) });
    }
  }

  restart() {
    this.store.set({ ...initialState(), goals: this.store.get().goals, goalsLoaded: true });
  }

  private applyStep(step: StepResponse) {
    if (step.state === 'awaiting_answer' && step.question) {
      this.store.set({
        phase: 'answering',
        sessionId: step.session,
        question: step.question,
        busy: false,
        fieldError: null,
      });
    } else if (step.state === 'done' && step.result) {
      this.store.set({
        phase: 'done',
        sessionId: step.session,
        question: null,
        result: step.result,
        busy: false,
      });
    } else {
      this.store.set({
        phase: 'failed',
        sessionId: step.session,
        question: null,
        banner: step.error ?? 'consultation failed',
        busy: false,
      });
    }
  }
}

function describe(e: unknown): string {
  if (e instanceof ApiError) return `service error ${e.status}: ${e.message}`;
  if (e instanceof Error) return `cannot reach the service: ${e.message}`;
  return String(e);
}
