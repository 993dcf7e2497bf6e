/**
 * Query session state: append-only history plus the active results.
 *
 * Every transition returns a new state object, so the rendered UI is a pure
 * function of (history, last response). Sessions serialize to JSON and
 * restore across reloads; a corrupt blob falls back to an empty session.
 */

import type { SearchMethod, SearchResponse } from './api.js';

export interface QueryRecord {
  queryText: string;
  method: SearchMethod;
  k: number;
  timestamp: string;
}

export interface SessionState {
  history: QueryRecord[];
  activeQuery: QueryRecord | null;
  activeResults: SearchResponse | null;
  selectedFrame: string | null;
}

export const DEFAULT_K = 10;

export function emptySession(): SessionState {
  return { history: [], activeQuery: null, activeResults: null, selectedFrame: null };
}

export function canSubmit(queryText: string): boolean {
  return queryText.trim().length > 0;
}

export function makeRecord(
  queryText: string,
  method: SearchMethod,
  k: number,
  now: () => string = () => new Date().toISOString(),
): QueryRecord {
  return { queryText: queryText.trim(), method, k, timestamp: now() };
}

/** Append to history when a query is submitted; results arrive separately. */
export function recordQuery(state: SessionState, record: QueryRecord): SessionState {
  return { ...state, history: [...state.history, record], activeQuery: record };
}

/**
 * Attach results for a query. Stale responses (for anything other than the
 * active query) are dropped: one in-flight search at a time wins.
 */
export function applyResults(
  state: SessionState,
  record: QueryRecord,
  results: SearchResponse,
): SessionState {
  if (state.activeQuery !== null && record !== state.activeQuery) {
    return state;
  }
  return { ...state, activeResults: results, selectedFrame: null };
}

export function selectFrame(state: SessionState, frameId: string | null): SessionState {
  return { ...state, selectedFrame: frameId };
}

/** The query submitted before the active one, for history-back. */
export function previousQuery(state: SessionState): QueryRecord | null {
  if (state.history.length < 2) return null;
  return state.history[state.history.length - 2];
}

/** Compose a refined query by appending a caption fragment. */
export function refineQuery(current: string, fragment: string): string {
  const base = current.trim();
  const extra = fragment.trim();
  if (!base) return extra;
  if (!extra || base.toLowerCase().includes(extra.toLowerCase())) return base;
  return `${base} ${extra}`;
}

interface SerializedSession {
  version: 1;
  history: QueryRecord[];
  activeResults: SearchResponse | null;
  selectedFrame: string | null;
}

export function serializeSession(state: SessionState): string {
  const payload: SerializedSession = {
    version: 1,
    history: state.history,
    activeResults: state.activeResults,
    selectedFrame: state.selectedFrame,
  };
  return JSON.stringify(payload);
}

export function restoreSession(raw: string | null): SessionState {
  if (!raw) return emptySession();
  try {
    const parsed = JSON.parse(raw) as SerializedSession;
    if (parsed.version !== 1 || !Array.isArray(parsed.history)) return emptySession();
    const history = parsed.history.filter(
      (r) => typeof r?.queryText === 'string' && typeof r?.method === 'string',
    );
    return {
      history,
      activeQuery: history.length ? history[history.length - 1] : null,
      activeResults: parsed.activeResults ?? null,
      selectedFrame: typeof parsed.selectedFrame === 'string' ? parsed.selectedFrame : null,
    };
  } catch {
    return emptySession();
  }
}
