// DOM rendering: plain elements, re-rendered from the store on every change.
// Forms are keyboard-completable end to end (labels, submit-on-enter).

import { Consultation, ViewState, renderValue } from './state.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBanner(state: ViewState, actions: Consultation): HTMLElement {
  const banner = el('div', { class: 'banner', role: 'alert' });
  banner.appendChild(el('span', {}, state.banner ?? ''));
  const retry = el('button', { type: 'button', class: 'retry' }, 'Retry');
  retry.addEventListener('click', () => {
    if (!state.goalsLoaded) void actions.loadGoals();
    else if (state.goal && state.phase === 'choosing_goal') void actions.start(state.goal);
    else actions.restart();
  });
  banner.appendChild(retry);
  return banner;
}

function renderGoalPicker(state: ViewState, actions: Consultation): HTMLElement {
  const section = el('section', { class: 'goal-picker' });
  section.appendChild(el('h2', {}, 'Start a consultation'));
  const form = el('form', { class: 'goal-form' });
  const label = el('label', { for: 'goal' }, 'Goal');
  const select = el('select', { id: 'goal', name: 'goal' });
  for (const goal of state.goals) {
    select.appendChild(el('option', { value: goal }, goal));
  }
  const button = el('button', { type: 'submit' }, 'Consult');
  if (!state.goals.length) button.setAttribute('disabled', 'disabled');
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const goal = (form.querySelector('#goal') as HTMLSelectElement).value;
    if (goal) void actions.start(goal);
  });
  form.append(label, select, button);
  section.appendChild(form);
  return section;
}

function renderQuestion(state: ViewState, actions: Consultation): HTMLElement {
  const q = state.question!;
  const section = el('section', { class: 'question' });
  section.appendChild(el('h2', {}, 'Question'));
  const form = el('form', { class: 'answer-form' });
  const label = el('label', { for: 'answer', class: 'prompt' }, q.prompt);
  form.appendChild(label);

  if (q.choices && q.choices.length) {
    const select = el('select', { id: 'answer', name: 'answer' });
    for (const choice of q.choices) {
      select.appendChild(el('option', { value: String(choice) }, String(choice)));
    }
    form.appendChild(select);
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      const index = (form.querySelector('#answer') as HTMLSelectElement).selectedIndex;
      void actions.submit('', q.choices![index]);
    });
  } else {
    const input = el('input', {
      id: 'answer', name: 'answer', type: 'text', autocomplete: 'off',
      'aria-describedby': 'answer-hint',
    });
    form.appendChild(input);
    form.appendChild(el('small', { id: 'answer-hint', class: 'hint' },
      `${q.slot}: ${q.kind}`));
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      void actions.submit((form.querySelector('#answer') as HTMLInputElement).value);
    });
  }
  if (state.fieldError) {
    form.appendChild(el('p', { class: 'field-error', role: 'alert' }, state.fieldError));
  }
  for (const violation of state.violations) {
    form.appendChild(el('p', { class: 'field-error violation', role: 'alert' }, violation));
  }
  const submit = el('button', { type: 'submit' }, 'Answer');
  if (state.busy) submit.setAttribute('disabled', 'disabled');
  form.appendChild(submit);
  section.appendChild(form);
  return section;
}

function renderResult(state: ViewState): HTMLElement {
  const section = el('section', { class: 'result-card' });
  section.appendChild(el('h2', {}, 'Result'));
  const result = state.result!;
  section.appendChild(el('p', { class: 'result-value' },
    `${state.goal ?? ''} = ${renderValue(result)}`));
  section.appendChild(el('small', { class: 'result-kind' }, result.kind));
  return section;
}

function renderHistory(state: ViewState): HTMLElement {
  const section = el('section', { class: 'history' });
  section.appendChild(el('h3', {}, 'Answers so far'));
  const list = el('ul');
  for (const entry of state.history) {
    list.appendChild(el('li', {}, `${entry.slot} = ${String(entry.value)}`));
  }
  section.appendChild(list);
  return section;
}

function renderTrace(state: ViewState, actions: Consultation): HTMLElement {
  const section = el('section', { class: 'trace' });
  const toggle = el('button', { type: 'button', class: 'trace-toggle' },
    state.traceOpen ? 'Hide trace' : 'Show trace');
  toggle.addEventListener('click', () => void actions.toggleTrace());
  section.appendChild(toggle);
  if (state.traceOpen) {
    const list = el('div', { class: 'trace-events' });
    for (const event of state.trace) {
      const details = el('details');
      details.appendChild(el('summary', {}, `${event.seq} ${event.kind}`));
      const fields = Object.entries(event)
        .filter(([key]) => key !== 'seq' && key !== 'kind')
        .map(([key, value]) => `${key}=${String(value)}`)
        .join(' ');
      details.appendChild(el('pre', {}, fields));
      list.appendChild(details);
    }
    section.appendChild(list);
  }
  return section;
}

function renderExpired(actions: Consultation): HTMLElement {
  const section = el('section', { class: 'expired', role: 'alert' });
  section.appendChild(el('p', {}, 'This session has expired or was answered elsewhere.'));
  const restart = el('button', { type: 'button', class: 'restart' }, 'Start over');
  restart.addEventListener('click', () => actions.restart());
  section.appendChild(restart);
  return section;
}

export function mount(root: HTMLElement, actions: Consultation) {
  const render = (state: ViewState) => {
    root.textContent = '';
    const app = el('div', { class: 'console' });
    app.appendChild(el('h1', {}, 'Knowledge consultation'));
    if (state.banner) app.appendChild(renderBanner(state, actions));
    if (state.expired) {
      app.appendChild(renderExpired(actions));
    } else if (state.phase === 'choosing_goal') {
      app.appendChild(renderGoalPicker(state, actions));
    } else if (state.phase === 'answering' && state.question) {
      app.appendChild(renderQuestion(state, actions));
      if (state.history.length) app.appendChild(renderHistory(state));
    } else if (state.phase === 'done' && state.result) {
      app.appendChild(renderResult(state));
      if (state.history.length) app.appendChild(renderHistory(state));
    }
    if (state.sessionId && !state.expired) app.appendChild(renderTrace(state, actions));
    root.appendChild(app);
  };
  actions.store.subscribe(render);
  render(actions.store.get());
}
