import { ApiClient } from './api.js';
import { Consultation, Store } from './state.js';
import { mount } from './views.js';

declare global {
  interface Window {
    FRAMEKIT_SERVICE?: string;
  }
}

function serviceBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('service');
  return fromQuery ?? window.FRAMEKIT_SERVICE ?? 'http://127.0.0.1:8080';
}

export function boot(root: HTMLElement, baseUrl?: string, fetchFn = fetch.bind(globalThis)) {
  const api = new ApiClient(baseUrl ?? serviceBaseUrl(), fetchFn);
  const consultation = new Consultation(api, new Store());
  mount(root, consultation);
  void consultation.loadGoals();
  return consultation;
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  boot(document.getElementById('app')!);
}
