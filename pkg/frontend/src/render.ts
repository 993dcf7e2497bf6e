/**
 * Pure HTML renderers for the single-page layout: results grid, frame
 * detail drawer, history strip, status line. No fetching, no state; the
 * page is re-rendered from the session after every transition.
 *
 * Scores are printed verbatim (String(score)); all user/service text is
 * escaped before insertion.
 */

import type { ContextResponse, RankedFrame, SearchResponse } from './api.js';
import type { QueryRecord } from './state.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function shortTime(timestamp: string): string {
  const match = timestamp.match(/T(\d{2}:\d{2})/);
  return match ? match[1] : timestamp;
}

export function renderTile(frame: RankedFrame, rank: number, selected: boolean): string {
  const classAttr = selected ? 'tile selected' : 'tile';
  return (
    `<figure class="${classAttr}" data-frame-id="${escapeHtml(frame.frameId)}">` +
    `<img src="${escapeHtml(frame.thumbnailUrl)}" alt="${escapeHtml(frame.frameId)}" loading="lazy">` +
    `<figcaption>` +
    `<span class="rank">#${rank}</span>` +
    `<span class="time">${escapeHtml(shortTime(frame.timestamp))}</span>` +
    `<span class="score" title="similarity score">${escapeHtml(String(frame.score))}</span>` +
    `</figcaption>` +
    `</figure>`
  );
}

export function renderResultsGrid(
  results: SearchResponse | null,
  selectedFrame: string | null,
): string {
  if (results === null) {
    return '<p class="placeholder">Search your lifelog to see moments here.</p>';
  }
  if (results.rankedFrames.length === 0) {
    return '<p class="placeholder">No moments matched this query.</p>';
  }
  const tiles = results.rankedFrames
    .map((frame, i) => renderTile(frame, i + 1, frame.frameId === selectedFrame))
    .join('');
  return `<div class="grid">${tiles}</div>`;
}

export function renderStatus(results: SearchResponse | null, error: string | null): string {
  if (error !== null) {
    return (
      `<span class="error">${escapeHtml(error)}</span> ` +
      '<button type="button" id="retry">Retry</button>'
    );
  }
  if (results === null) return '';
  const count = results.rankedFrames.length;
  return `<span class="latency">${count} moments in ${results.timingMs.toFixed(1)} ms</span>`;
}

export function renderHistory(history: QueryRecord[]): string {
  if (history.length === 0) return '';
  const items = history
    .slice()
    .reverse()
    .map(
      (record, i) =>
        `<li><button type="button" class="history-entry" data-history-index="${history.length - 1 - i}">` +
        `${escapeHtml(record.queryText)} <small>(${escapeHtml(record.method)}, k=${record.k})</small>` +
        `</button></li>`,
    )
    .join('');
  return `<ul class="history">${items}</ul>`;
}

/** Caption texts of the selected frame, one clickable row per channel. */
function renderCaptionRows(captions: { granularity: string; text: string }[]): string {
  if (captions.length === 0) {
    return '<p class="placeholder">No captions for this frame.</p>';
  }
  return captions
    .map(
      (caption) =>
        `<p class="caption-row" data-granularity="${escapeHtml(caption.granularity)}">` +
        `<span class="channel">${escapeHtml(caption.granularity)}</span> ` +
        `<button type="button" class="caption-text" data-caption="${escapeHtml(caption.text)}">` +
        `${escapeHtml(caption.text)}</button>` +
        `</p>`,
    )
    .join('');
}

export function renderDetailPanel(
  selected: RankedFrame | null,
  context: ContextResponse | null,
  error: string | null = null,
): string {
  if (error !== null) {
    return `<p class="placeholder">${escapeHtml(error)}</p>`;
  }
  if (selected === null) {
    return '<p class="placeholder">Select a moment to inspect it.</p>';
  }
  const center = context?.frames.find((f) => f.isCenter);
  const captionRows = renderCaptionRows(center?.captions ?? []);
  const strip = (context?.frames ?? [])
    .map(
      (frame) =>
        `<img class="${frame.isCenter ? 'neighbor center' : 'neighbor'}" ` +
        `src="${escapeHtml(frame.thumbnailUrl)}" ` +
        `title="${escapeHtml(shortTime(frame.timestamp))}" ` +
        `alt="${escapeHtml(frame.frameId)}">`,
    )
    .join('');
  return (
    `<h2>${escapeHtml(selected.frameId)}</h2>` +
    `<p class="meta">${escapeHtml(selected.timestamp)} &middot; score ` +
    `${escapeHtml(String(selected.score))}</p>` +
    `<div class="captions">${captionRows}</div>` +
    `<div class="strip">${strip}</div>`
  );
}
