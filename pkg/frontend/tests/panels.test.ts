// Pure renderer checks: iconography, probability branches, and the
// invariant that panels show service numbers verbatim.

import { expect, test } from 'vitest';
import { renderChainPlot } from '../src/chainPlot.js';
import { renderEstimates, renderError, renderWhatIf } from '../src/panels.js';
import type { ChainPoint, Estimates, WhatIf } from '../src/api.js';

const chain: ChainPoint[] = [
  { trial: 1, level: 3, treatment: 0.5, response: 'no' },
  { trial: 2, level: 4, treatment: 0.7, response: 'no' },
  { trial: 3, level: 5, treatment: 0.9, response: 'yes' },
];

test('chain plot uses x marks for yes and circles for no', () => {
  const svg = renderChainPlot(chain, { levels: [0.1, 0.3, 0.5, 0.7, 0.9] });
  expect((svg.match(/mark-yes/g) ?? []).length).toBe(1);
  expect((svg.match(/mark-no/g) ?? []).length).toBe(2);
  expect(svg).not.toContain('target-line');
  const withTarget = renderChainPlot(chain, {
    levels: [0.1, 0.3, 0.5, 0.7, 0.9],
    targetTreatment: 0.6,
  });
  expect(withTarget).toContain('target-line');
});

test('what-if renders deterministic branches and override badges', () => {
  const wi: WhatIf = {
    yes: { deterministic: true, next: 2, bayes_override: true },
    no: { deterministic: true, next: 4, bayes_override: false },
  };
  const html = renderWhatIf(wi, [1, 2, 3, 4, 5]);
  expect(html).toContain('data-branch="yes"');
  expect(html).toContain('level 2 (2)');
  expect(html).toContain('model override');
  expect(html).not.toContain('level 4 (4)<span'); // no badge on the no-branch
});

test('what-if renders the randomization law instead of a false certainty', () => {
  const wi: WhatIf = {
    yes: { deterministic: true, next: 2 },
    no: { deterministic: false, next: null, up_probability: 1 / 3 },
  };
  const html = renderWhatIf(wi, [1, 2, 3]);
  expect(html).toContain('up with probability 0.3333');
});

test('estimate cards carry the served numbers verbatim', () => {
  const est: Estimates = {
    insufficient_data: false,
    trials: 32,
    estimates: [
      {
        name: 'cir',
        point: 67.5,
        se: null,
        df: 1,
        percentiles: [0.025, 0.975],
        interval: [55.90609652312483, 79.09390347687517],
        method: 'cir-poisson',
      },
      { name: 'v', error: 'needs at least 1 reversals, found 0' },
    ],
  };
  const html = renderEstimates(est);
  expect(html).toContain('<p class="point">67.5</p>');
  expect(html).toContain('55.90609652312483');
  expect(html).toContain('79.09390347687517');
  expect(html).toContain('needs at least 1 reversals');
});

test('insufficient data and error banner states', () => {
  expect(renderEstimates({ insufficient_data: true, trials: 1, estimates: [] }))
    .toContain('insufficient data (1 trial)');
  const banner = renderError('expected response for trial 2, got step 1', true);
  expect(banner).toContain('role="alert"');
  expect(banner).toContain('data-action="retry"');
  expect(renderError(null, false)).toBe('');
});
