/**
 * Page wiring: query bar, method tabs, results grid, detail drawer.
 *
 * One search is in flight at a time; a newer submission aborts the older
 * request and its response is never displayed. The session (history, last
 * results, selection) persists in sessionStorage across reloads.
 */

import { ALL_METHODS, ApiClient, type SearchMethod, type ContextResponse } from './api.js';
import {
  DEFAULT_K,
  applyResults,
  canSubmit,
  emptySession,
  makeRecord,
  previousQuery,
  recordQuery,
  refineQuery,
  restoreSession,
  selectFrame,
  serializeSession,
  type SessionState,
} from './state.js';
import { renderDetailPanel, renderHistory, renderResultsGrid, renderStatus } from './render.js';

const STORAGE_KEY = 'lifelogsearch-session';

function apiBase(): string {
  const param = new URLSearchParams(window.location.search).get('api');
  return param ?? '';
}

export function startApp(root: Document = document): void {
  const api = new ApiClient(apiBase());
  let session: SessionState = restoreSession(sessionStorage.getItem(STORAGE_KEY));
  let lastError: string | null = null;
  let inflight: AbortController | null = null;
  let contextCache: ContextResponse | null = null;

  const queryInput = root.getElementById('query') as HTMLInputElement;
  const submitButton = root.getElementById('submit') as HTMLButtonElement;
  const methodTabs = root.getElementById('methods') as HTMLElement;
  const kInput = root.getElementById('k') as HTMLInputElement;
  const gridHost = root.getElementById('results') as HTMLElement;
  const statusHost = root.getElementById('status') as HTMLElement;
  const historyHost = root.getElementById('history-host') as HTMLElement;
  const detailHost = root.getElementById('detail') as HTMLElement;

  let method: SearchMethod = 'single';

  function persist(): void {
    sessionStorage.setItem(STORAGE_KEY, serializeSession(session));
  }

  function selectedFrameData() {
    if (!session.activeResults || !session.selectedFrame) return null;
    return (
      session.activeResults.rankedFrames.find((f) => f.frameId === session.selectedFrame) ?? null
    );
  }

  function render(): void {
    submitButton.disabled = !canSubmit(queryInput.value);
    gridHost.innerHTML = renderResultsGrid(session.activeResults, session.selectedFrame);
    statusHost.innerHTML = renderStatus(session.activeResults, lastError);
    historyHost.innerHTML = renderHistory(session.history);
    detailHost.innerHTML = renderDetailPanel(selectedFrameData(), contextCache);
    for (const tab of methodTabs.querySelectorAll('button[data-method]')) {
      tab.classList.toggle('active', tab.getAttribute('data-method') === method);
    }
    const retry = root.getElementById('retry');
    if (retry) retry.addEventListener('click', () => void submit());
  }

  async function submit(): Promise<void> {
    if (!canSubmit(queryInput.value)) return;
    const k = Math.max(1, Number(kInput.value) || DEFAULT_K);
    const record = makeRecord(queryInput.value, method, k);
    session = recordQuery(session, record);
    lastError = null;
    contextCache = null;
    inflight?.abort();
    const controller = new AbortController();
    inflight = controller;
    render();
    try {
      const results = await api.search(record.queryText, record.method, record.k, controller.signal);
      if (controller.signal.aborted) return;
      session = applyResults(session, record, results);
    } catch (err) {
      if (controller.signal.aborted) return;
      lastError = err instanceof Error ? err.message : String(err);
    }
    persist();
    render();
  }

  async function inspect(frameId: string): Promise<void> {
    session = selectFrame(session, frameId);
    contextCache = null;
    render();
    try {
      contextCache = await api.context(frameId, 2);
    } catch (err) {
      detailHost.innerHTML = renderDetailPanel(
        selectedFrameData(),
        null,
        err instanceof Error ? err.message : String(err),
      );
      return;
    }
    persist();
    render();
  }

  // method tabs
  for (const name of ALL_METHODS) {
    const tab = root.createElement('button');
    tab.type = 'button';
    tab.textContent = name;
    tab.setAttribute('data-method', name);
    tab.addEventListener('click', () => {
      method = name;
      if (canSubmit(queryInput.value)) void submit();
      else render();
    });
    methodTabs.appendChild(tab);
  }

  queryInput.addEventListener('input', () => {
    submitButton.disabled = !canSubmit(queryInput.value);
  });
  (root.getElementById('search-form') as HTMLFormElement).addEventListener('submit', (event) => {
    event.preventDefault();
    void submit();
  });

  gridHost.addEventListener('click', (event) => {
    const tile = (event.target as HTMLElement).closest('[data-frame-id]');
    if (tile) void inspect(tile.getAttribute('data-frame-id')!);
  });

  detailHost.addEventListener('click', (event) => {
    const captionButton = (event.target as HTMLElement).closest('[data-caption]');
    if (captionButton) {
      queryInput.value = refineQuery(queryInput.value, captionButton.getAttribute('data-caption')!);
      queryInput.focus();
      render();
    }
  });

  historyHost.addEventListener('click', (event) => {
    const entry = (event.target as HTMLElement).closest('[data-history-index]');
    if (!entry) return;
    const record = session.history[Number(entry.getAttribute('data-history-index'))];
    if (!record) return;
    queryInput.value = record.queryText;
    method = record.method;
    kInput.value = String(record.k);
    void submit();
  });

  (root.getElementById('history-back') as HTMLButtonElement).addEventListener('click', () => {
    const prior = previousQuery(session);
    if (!prior) return;
    queryInput.value = prior.queryText;
    method = prior.method;
    kInput.value = String(prior.k);
    render();
  });

  (root.getElementById('clear-session') as HTMLButtonElement).addEventListener('click', () => {
    session = emptySession();
    contextCache = null;
    lastError = null;
    sessionStorage.removeItem(STORAGE_KEY);
    render();
  });

  kInput.value = String(DEFAULT_K);
  render();
}

if (typeof document !== 'undefined' && document.getElementById('search-form')) {
  startApp();
}
