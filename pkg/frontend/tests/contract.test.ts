// Contract tests against a mock service: the console performs no inference of
// its own, every displayed value round-trips through the API, and each user
// action issues at most one request.

import { beforeEach, describe, expect, it } from 'vitest';

import { FetchLike, StepResponse } from '../src/api.js';
import { boot } from '../src/main.js';
import { validateInput } from '../src/state.js';

interface Recorded {
  path: string;
  method: string;
  body: unknown;
}

class MockService {
  calls: Recorded[] = [];
  private handlers = new Map<string, (body: unknown) => { status: number; body: unknown }>();

  on(method: string, path: string, handler: (body: unknown) => { status: number; body: unknown }) {
    this.handlers.set(`${method} ${path}`, handler);
  }

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input);
    const method = (init?.method ?? 'GET').toUpperCase();
    const path = url.pathname + (url.search && url.search !== '?' ? url.search : '');
    const body = init?.body ? JSON.parse(init.body as string) : null;
    this.calls.push({ path, method, body });
    const handler = this.handlers.get(`${method} ${path}`);
    if (!handler) {
      return jsonResponse(404, { error: `no handler for ${method} ${path}` });
    }
    const out = handler(body);
    return jsonResponse(out.status, out.body);
  };
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

const KB = {
  frames: [
    {
      name: 'Thing',
      parent: null,
      kind: 'local',
      slots: [
        { name: 'size', type: 'integer', elem: null, prompt: 'Enter size' },
        { name: 'big', type: 'boolean', elem: null, prompt: null },
      ],
    },
  ],
  version: 'v',
};

const QUESTION: StepResponse = {
  session: 's1',
  state: 'awaiting_answer',
  question: { id: 'q1', slot: 'size', prompt: 'Enter size', kind: 'integer', choices: null },
};

const DONE: StepResponse = {
  session: 's1',
  state: 'done',
  result: { kind: 'boolean', value: true },
};

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

describe('console ↔ service contract', () => {
  let root: HTMLElement;
  let mock: MockService;

  beforeEach(() => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById('root')!;
    mock = new MockService();
    mock.on('GET', '/api/kb', () => ({ status: 200, body: KB }));
  });

  it('loads goals with exactly one request and lists Frame.slot options', async () => {
    boot(root, 'http://mock', mock.fetch);
    await flush();
    expect(mock.calls).toHaveLength(1);
    expect(mock.calls[0]).toMatchObject({ method: 'GET', path: '/api/kb' });
    const options = [...root.querySelectorAll('#goal option')].map((o) => o.textContent);
    expect(options).toEqual(['Thing.size', 'Thing.big']);
  });

  it('starting a goal is one POST and renders the question form', async () => {
    mock.on('POST', '/api/sessions', (body) => {
      expect(body).toEqual({ goal: 'Thing.big' });
      return { status: 200, body: QUESTION };
    });
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('#goal') as HTMLSelectElement).value = 'Thing.big';
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    expect(mock.calls.filter((c) => c.method === 'POST')).toHaveLength(1);
    expect(root.querySelector('.prompt')!.textContent).toBe('Enter size');
    expect(root.querySelector('#answer')).not.toBeNull();
  });

  it('client-side kind validation rejects bad input with no request', async () => {
    mock.on('POST', '/api/sessions', () => ({ status: 200, body: QUESTION }));
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    const before = mock.calls.length;
    (root.querySelector('#answer') as HTMLInputElement).value = 'abc';
    (root.querySelector('.answer-form') as HTMLFormElement).requestSubmit();
    await flush();
    expect(mock.calls.length).toBe(before); // nothing went to the service
    expect(root.querySelector('.field-error')!.textContent).toMatch(/integer/);
    // still answering: no state advance
    expect(root.querySelector('.answer-form')).not.toBeNull();
  });

  it('a valid answer is one POST; the result card shows the server value', async () => {
    mock.on('POST', '/api/sessions', () => ({ status: 200, body: QUESTION }));
    mock.on('POST', '/api/sessions/s1/answers', (body) => {
      expect(body).toEqual({ question_id: 'q1', value: 12 });
      return { status: 200, body: DONE };
    });
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    (root.querySelector('#answer') as HTMLInputElement).value = '12';
    const before = mock.calls.length;
    (root.querySelector('.answer-form') as HTMLFormElement).requestSubmit();
    await flush();
    expect(mock.calls.length).toBe(before + 1);
    expect(root.querySelector('.result-value')!.textContent).toContain('true');
    expect([...root.querySelectorAll('.history li')].map((li) => li.textContent))
      .toEqual(['size = 12']);
  });

  it('server 422 renders inline violations without advancing', async () => {
    mock.on('POST', '/api/sessions', () => ({ status: 200, body: QUESTION }));
    mock.on('POST', '/api/sessions/s1/answers', () => ({
      status: 422,
      body: { error: 'answer violates the slot constraints',
              violations: ['Bike: constraint wheels = 2'] },
    }));
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    (root.querySelector('#answer') as HTMLInputElement).value = '3';
    (root.querySelector('.answer-form') as HTMLFormElement).requestSubmit();
    await flush();
    expect(root.querySelector('.violation')!.textContent).toContain('wheels = 2');
    expect(root.querySelector('.answer-form')).not.toBeNull(); // still answering
  });

  it('choice questions render selectable options and submit the choice', async () => {
    mock.on('POST', '/api/sessions', () => ({
      status: 200,
      body: {
        session: 's1',
        state: 'awaiting_answer',
        question: { id: 'q1', slot: 'color', prompt: 'Pick', kind: 'string',
                    choices: ['red', 'green'] },
      },
    }));
    mock.on('POST', '/api/sessions/s1/answers', (body) => {
      expect(body).toEqual({ question_id: 'q1', value: 'red' });
      return { status: 200, body: { session: 's1', state: 'done',
                                    result: { kind: 'string', value: 'ok' } } };
    });
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    const select = root.querySelector('.answer-form select') as HTMLSelectElement;
    expect([...select.options].map((o) => o.value)).toEqual(['red', 'green']);
    (root.querySelector('.answer-form') as HTMLFormElement).requestSubmit();
    await flush();
    expect(root.querySelector('.result-value')!.textContent).toContain('ok');
  });

  it('an expired session offers a restart', async () => {
    mock.on('POST', '/api/sessions', () => ({ status: 200, body: QUESTION }));
    mock.on('POST', '/api/sessions/s1/answers', () => ({
      status: 404, body: { error: 'unknown or expired session' },
    }));
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    (root.querySelector('#answer') as HTMLInputElement).value = '12';
    (root.querySelector('.answer-form') as HTMLFormElement).requestSubmit();
    await flush();
    const restart = root.querySelector('.expired .restart') as HTMLButtonElement;
    expect(restart).not.toBeNull();
    restart.click();
    await flush();
    expect(root.querySelector('.goal-form')).not.toBeNull();
  });

  it('service outage shows a banner with retry', async () => {
    const failing: FetchLike = async () => {
      throw new Error('connection refused');
    };
    boot(root, 'http://mock', failing);
    await flush();
    expect(root.querySelector('.banner')!.textContent).toContain('cannot reach');
    expect(root.querySelector('.banner .retry')).not.toBeNull();
  });

  it('the trace toggle is one request and renders collapsible events', async () => {
    mock.on('POST', '/api/sessions', () => ({ status: 200, body: DONE }));
    mock.on('GET', '/api/sessions/s1/trace', () => ({
      status: 200,
      body: { events: [{ seq: 1, kind: 'goal_pushed', frame: 'Thing', slot: 'big' },
                       { seq: 2, kind: 'rule_fired', frame: 'Thing', slot: 'big' }] },
    }));
    boot(root, 'http://mock', mock.fetch);
    await flush();
    (root.querySelector('.goal-form') as HTMLFormElement).requestSubmit();
    await flush();
    const before = mock.calls.length;
    (root.querySelector('.trace-toggle') as HTMLButtonElement).click();
    await flush();
    expect(mock.calls.length).toBe(before + 1);
    const summaries = [...root.querySelectorAll('.trace-events summary')]
      .map((s) => s.textContent);
    expect(summaries).toEqual(['1 goal_pushed', '2 rule_fired']);
  });
});

describe('input validation mirrors the server kinds', () => {
  it('integers', () => {
    expect(validateInput('42', 'integer')).toEqual({ ok: true, value: 42 });
    expect(validateInput('-3', 'integer')).toEqual({ ok: true, value: -3 });
    expect(validateInput('abc', 'integer').ok).toBe(false);
    expect(validateInput('4.5', 'integer').ok).toBe(false);
    expect(validateInput('9223372036854775808', 'integer').ok).toBe(false);
  });

  it('booleans and strings', () => {
    expect(validateInput('true', 'boolean')).toEqual({ ok: true, value: true });
    expect(validateInput('yes', 'boolean').ok).toBe(false);
    expect(validateInput('anything', 'string')).toEqual({ ok: true, value: 'anything' });
    expect(validateInput('', 'reference').ok).toBe(false);
  });

  it('lists', () => {
    expect(validateInput('[1, 2]', 'list')).toEqual({ ok: true, value: [1, 2] });
    expect(validateInput('nope', 'list').ok).toBe(false);
  });
});
