// Demo replay: the bundled second-stage session is imported read-only and
// the estimate cards show exactly what the backend served.

import { expect, test } from 'vitest';
import { TrialApi } from '../src/api.js';
import { openDemo } from '../src/state.js';
import { renderEstimates } from '../src/panels.js';
import { renderChainPlot } from '../src/chainPlot.js';
import { ReplayFetch, Exchange } from './replay.js';
import fixture from './fixtures/stage2-demo.json';

interface Fixture {
  events: string;
  exchanges: Exchange[];
}

const fx = fixture as unknown as Fixture;

test('demo import shows the backend-served 67.5 estimate', async () => {
  const replay = new ReplayFetch(fx.exchanges);
  const store = await openDemo(new TrialApi('', replay.fetch), fx.events);

  expect(store.state.readOnly).toBe(true);
  expect(store.state.view?.trials).toBe(32);
  expect(store.state.view?.status).toBe('completed');

  const est = store.state.estimates!;
  const cir = est.estimates.find((e) => e.name === 'cir')!;
  expect(cir.point).toBe(67.5);

  const html = renderEstimates(est);
  expect(html).toContain('67.5');
  // every displayed point is the serialized service value, verbatim
  for (const card of est.estimates) {
    if (card.point != null) expect(html).toContain(`<p class="point">${card.point}</p>`);
  }
  expect(replay.remaining).toBe(0);
});

test('read-only demo never posts responses', async () => {
  const replay = new ReplayFetch(fx.exchanges);
  const store = await openDemo(new TrialApi('', replay.fetch), fx.events);
  const before = replay.consumed;
  await store.submit('yes');
  expect(replay.consumed).toBe(before);
});

test('demo chain renders the recorded marks', async () => {
  const replay = new ReplayFetch(fx.exchanges);
  const store = await openDemo(new TrialApi('', replay.fetch), fx.events);
  const view = store.state.view!;
  const svg = renderChainPlot(view.chain, {
    levels: view.config.grid.levels,
    targetTreatment: 67.5,
  });
  const yes = view.chain.filter((c) => c.response === 'yes').length;
  expect((svg.match(/mark-yes/g) ?? []).length).toBe(yes);
  expect((svg.match(/mark-no/g) ?? []).length).toBe(view.chain.length - yes);
  expect(svg).toContain('target-line');
});
