// SVG chain plot: trial index against treatment level, one mark per trial,
// 'x' for yes responses and 'o' for no, the way operators in this field
// read their charts. Pure string rendering so it is testable headlessly.

import { ChainPoint } from './api.js';

export interface ChainPlotOptions {
  width?: number;
  height?: number;
  levels: number[];
  nextLevel?: number | null;
  targetTreatment?: number | null; // demo mode draws the known-target line
}

const PAD = { left: 46, right: 16, top: 12, bottom: 26 };

export function renderChainPlot(chain: ChainPoint[], opts: ChainPlotOptions): string {
  const width = opts.width ?? 640;
  const height = opts.height ?? 260;
  const levels = opts.levels;
  const innerW = width - PAD.left - PAD.right;
  const innerH = height - PAD.top - PAD.bottom;
  const nTicks = Math.max(chain.length + 1, 10);
  const xAt = (trial: number) => PAD.left + ((trial - 1) / (nTicks - 1)) * innerW;
  const lo = levels[0];
  const hi = levels[levels.length - 1];
  const yAt = (treatment: number) =>
    PAD.top + (1 - (treatment - lo) / (hi - lo)) * innerH;

  const parts: string[] = [];
  parts.push(
    `<svg class="chain-plot" viewBox="0 0 ${width} ${height}" role="img" ` +
      `aria-label="treatment chain, ${chain.length} trials">`,
  );
  for (const lv of levels) {
    const y = yAt(lv);
    parts.push(
      `<line x1="${PAD.left}" y1="${y}" x2="${width - PAD.right}" y2="${y}" class="gridline"/>`,
      `<text x="${PAD.left - 6}" y="${y + 4}" class="axis-label" text-anchor="end">${lv}</text>`,
    );
  }
  if (opts.targetTreatment != null) {
    const y = yAt(opts.targetTreatment);
    parts.push(
      `<line x1="${PAD.left}" y1="${y}" x2="${width - PAD.right}" y2="${y}" class="target-line" stroke-dasharray="6 4"/>`,
    );
  }
  // connecting path
  if (chain.length > 1) {
    const d = chain
      .map((pt, i) => `${i === 0 ? 'M' : 'L'}${xAt(pt.trial).toFixed(1)} ${yAt(pt.treatment).toFixed(1)}`)
      .join(' ');
    parts.push(`<path d="${d}" class="chain-path" fill="none"/>`);
  }
  for (const pt of chain) {
    const x = xAt(pt.trial);
    const y = yAt(pt.treatment);
    if (pt.response === 'yes') {
      parts.push(
        `<g class="mark mark-yes" data-trial="${pt.trial}">` +
          `<line x1="${x - 4}" y1="${y - 4}" x2="${x + 4}" y2="${y + 4}"/>` +
          `<line x1="${x - 4}" y1="${y + 4}" x2="${x + 4}" y2="${y - 4}"/>` +
          `</g>`,
      );
    } else {
      parts.push(
        `<circle class="mark mark-no" data-trial="${pt.trial}" cx="${x}" cy="${y}" r="4.5" fill="none"/>`,
      );
    }
    if (pt.trial % 5 === 0 || pt.trial === 1) {
      parts.push(
        `<text x="${x}" y="${height - 8}" class="axis-label" text-anchor="middle">${pt.trial}</text>`,
      );
    }
  }
  if (opts.nextLevel != null && chain.length > 0) {
    const x = xAt(chain.length + 1);
    const y = yAt(opts.nextLevel);
    parts.push(
      `<rect class="mark-next" x="${x - 5}" y="${y - 5}" width="10" height="10" fill="none"/>`,
    );
  }
  parts.push('</svg>');
  return parts.join('');
}
