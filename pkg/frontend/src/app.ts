// Browser wiring for the conductor: one active session per tab, responses
// submitted only on explicit operator action (keyboard y / n included),
// every displayed figure refreshed from the service after confirmation.

import { TrialApi } from './api.js';
import { renderChainPlot } from './chainPlot.js';
import {
  renderError,
  renderEstimates,
  renderRecommendation,
  renderSummary,
  renderWhatIf,
} from './panels.js';
import { ConductorStore, openDemo } from './state.js';
import { STAGE2_EVENTS, STAGE2_TARGET_TREATMENT } from './demoFixture.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function render(store: ConductorStore, demoTarget: number | null): void {
  const s = store.state;
  const view = s.view;
  if (!view) return;
  el('summary').innerHTML = renderSummary(view);
  el('chain').innerHTML = renderChainPlot(view.chain, {
    levels: view.config.grid.levels,
    nextLevel: view.status === 'active' ? view.recommendation.treatment : null,
    targetTreatment: demoTarget,
  });
  el('recommendation').innerHTML = renderRecommendation(view.recommendation, view.status);
  el('what-if').innerHTML = renderWhatIf(s.whatIf, view.config.grid.levels);
  el('estimates').innerHTML = renderEstimates(s.estimates);
  el('errors').innerHTML = renderError(s.lastError, s.pending !== null);
  const disabled = s.readOnly || s.submitting || view.status !== 'active';
  el<HTMLButtonElement>('btn-yes').disabled = disabled;
  el<HTMLButtonElement>('btn-no').disabled = disabled;
  el('session-id').textContent = view.id;
}

export async function boot(): Promise<void> {
  const api = new TrialApi('');
  const params = new URLSearchParams(window.location.search);
  let store: ConductorStore;
  let demoTarget: number | null = null;

  if (params.get('demo') !== null) {
    store = await openDemo(api, STAGE2_EVENTS);
    demoTarget = STAGE2_TARGET_TREATMENT;
    el('mode-banner').textContent = 'demo replay (read-only): mixture study, second stage';
  } else if (params.get('trial')) {
    store = new ConductorStore(api);
    await store.load(params.get('trial')!);
  } else {
    store = new ConductorStore(api);
    const form = el<HTMLFormElement>('create-form');
    form.hidden = false;
    await new Promise<void>((resolve) => {
      form.addEventListener('submit', async (ev) => {
        ev.preventDefault();
        const data = new FormData(form);
        await store.create({
          grid: {
            lo: Number(data.get('lo')),
            hi: Number(data.get('hi')),
            m: Number(data.get('m')),
          },
          policy: { kind: 'kr', k: Number(data.get('k')) },
          start_level: Number(data.get('start')),
          n: Number(data.get('n')) || null,
          estimation: { target: Number(data.get('target')), ci: 'poisson' },
        });
        form.hidden = true;
        resolve();
      });
    });
  }

  store.subscribe(() => render(store, demoTarget));
  render(store, demoTarget);

  const submit = (response: 'yes' | 'no') => {
    void store.submit(response);
  };
  el('btn-yes').addEventListener('click', () => submit('yes'));
  el('btn-no').addEventListener('click', () => submit('no'));
  document.addEventListener('keydown', (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    if (ev.key === 'y' || ev.key === 'Y') submit('yes');
    if (ev.key === 'n' || ev.key === 'N') submit('no');
  });
  el('errors').addEventListener('click', (ev) => {
    const target = ev.target as HTMLElement;
    if (target.dataset.action === 'retry') void store.retry();
  });
}

if (typeof document !== 'undefined' && document.getElementById('conductor')) {
  void boot();
}
