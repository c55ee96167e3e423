// HTML renderers for the conductor's side panels. Pure string templates:
// every number shown is lifted verbatim from a service payload.

import { Estimates, Recommendation, SessionView, WhatIf, WhatIfBranch } from './api.js';

const esc = (s: unknown) =>
  String(s).replace(/[&<>"]/g, (c) => ({ '&': '&amp;', '<': '&lt;', '>': '&gt;', '"': '&quot;' })[c]!);

export function describePolicy(view: SessionView): string {
  const p = view.config.policy as Record<string, unknown>;
  switch (p.kind) {
    case 'sud':
      return 'simple up-and-down';
    case 'bcd':
      return `biased-coin (Γ=${p.gamma})`;
    case 'kr':
      return `${p.k}-in-a-row`;
    case 'gud':
      return `group up-and-down (${p.k},${p.a},${p.b})`;
    case 'crm':
      return `model-based (p=${p.p})`;
    case 'ccd':
      return `cumulative-cohort window (p=${p.p})`;
    case 'cbud':
    case 'rbud':
    case 'ccdbud':
      return `hybrid ${p.kind} (p=${p.p})`;
    default:
      return String(p.kind);
  }
}

export function renderSummary(view: SessionView): string {
  const levels = view.config.grid.levels;
  const n = view.config.n;
  return (
    `<dl class="config-summary">` +
    `<dt>design</dt><dd>${esc(describePolicy(view))}</dd>` +
    `<dt>levels</dt><dd>${levels[0]} … ${levels[levels.length - 1]} (${levels.length})</dd>` +
    `<dt>sample</dt><dd>${view.trials}${n ? ` of ${n}` : ''} trials</dd>` +
    `<dt>status</dt><dd class="status-${view.status}">${view.status}</dd>` +
    `</dl>`
  );
}

export function renderRecommendation(rec: Recommendation, status: string): string {
  const label = status === 'completed' ? 'final allocation' : 'next treatment';
  return (
    `<div class="recommendation" data-level="${rec.level}">` +
    `<span class="rec-label">${label}</span>` +
    `<span class="rec-value">${rec.treatment}</span>` +
    `<span class="rec-level">level ${rec.level}</span>` +
    `</div>`
  );
}

function branchText(branch: WhatIfBranch, levels: number[]): string {
  if (branch.deterministic && branch.next != null) {
    const badge = branch.bayes_override ? ` <span class="badge badge-override">model override</span>` : '';
    return `level ${branch.next} (${levels[branch.next - 1]})${badge}`;
  }
  if (branch.up_probability != null) {
    return `random: up with probability ${branch.up_probability.toFixed(4)}, else stay`;
  }
  if (branch.override_probability != null) {
    return `random: model override with probability ${branch.override_probability.toFixed(4)}`;
  }
  return 'unavailable';
}

export function renderWhatIf(whatIf: WhatIf | null, levels: number[]): string {
  if (!whatIf) {
    return `<div class="what-if what-if-unavailable">what-if unavailable</div>`;
  }
  return (
    `<table class="what-if"><caption>if the next response is…</caption>` +
    `<tr><th scope="row">yes</th><td data-branch="yes">${branchText(whatIf.yes, levels)}</td></tr>` +
    `<tr><th scope="row">no</th><td data-branch="no">${branchText(whatIf.no, levels)}</td></tr>` +
    `</table>`
  );
}

export function renderEstimates(est: Estimates | null): string {
  if (!est) return `<div class="estimates-empty">no estimates yet</div>`;
  if (est.insufficient_data) {
    return `<div class="estimates-empty">insufficient data (${est.trials} trial${est.trials === 1 ? '' : 's'})</div>`;
  }
  const cards = est.estimates.map((e) => {
    if (e.error || e.point == null) {
      return `<div class="estimate-card estimate-error" data-name="${esc(e.name)}">` +
        `<h3>${esc(e.name)}</h3><p>${esc(e.error ?? 'unavailable')}</p></div>`;
    }
    const interval = e.interval && e.percentiles
      ? `<p class="interval">(${e.interval.map((v) => String(v)).join(', ')})</p>` +
        `<p class="interval-label">at ${e.percentiles.join(' / ')}</p>`
      : '';
    return (
      `<div class="estimate-card" data-name="${esc(e.name)}">` +
      `<h3>${esc(e.name)}</h3>` +
      `<p class="point">${e.point}</p>` +
      interval +
      `<p class="method">${esc(e.method ?? '')}</p>` +
      `</div>`
    );
  });
  return `<div class="estimates">${cards.join('')}</div>`;
}

export function renderError(message: string | null, pendingRetry: boolean): string {
  if (!message) return '';
  const retry = pendingRetry
    ? `<button type="button" class="retry" data-action="retry">retry submission</button>`
    : '';
  return `<div class="error-banner" role="alert">${esc(message)} ${retry}</div>`;
}
