// Conductor session store: server-confirmed state transitions only.
//
// A response submission is keyed by its step number, so a retry after a
// network failure can never double-record: if the first attempt actually
// landed, the service answers 409 stale-step and the store resolves the
// retry by refreshing.

import {
  Estimates,
  ServiceError,
  SessionView,
  TrialApi,
  WhatIf,
} from './api.js';

export interface ConductorState {
  view: SessionView | null;
  whatIf: WhatIf | null;
  estimates: Estimates | null;
  pending: { response: 'yes' | 'no'; step: number } | null;
  submitting: boolean;
  lastError: string | null;
  readOnly: boolean;
}

export type Listener = (state: ConductorState) => void;

export class ConductorStore {
  state: ConductorState = {
    view: null,
    whatIf: null,
    estimates: null,
    pending: null,
    submitting: false,
    lastError: null,
    readOnly: false,
  };

  private listeners: Listener[] = [];

  constructor(
    private api: TrialApi,
    readOnly = false,
  ) {
    this.state.readOnly = readOnly;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  private patch(partial: Partial<ConductorState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  get sessionId(): string {
    const v = this.state.view;
    if (!v) throw new Error('no session loaded');
    return v.id;
  }

  async create(config: unknown): Promise<void> {
    const created = await this.api.createTrial(config);
    await this.load(created.id);
  }

  async load(id: string): Promise<void> {
    const view = await this.api.getTrial(id);
    this.patch({ view, lastError: null });
    await this.refreshSidePanels();
  }

  async refreshSidePanels(): Promise<void> {
    const view = this.state.view;
    if (!view) return;
    let whatIf: WhatIf | null = null;
    if (view.status === 'active') {
      try {
        whatIf = await this.api.whatIf(view.id);
      } catch {
        whatIf = null; // the panel shows its unavailable state
      }
    }
    let estimates: Estimates | null = null;
    if (view.trials >= 1) {
      const est = view.config.estimation;
      try {
        estimates = await this.api.estimates(view.id, est.target, 'cir,ad', est.ci);
      } catch {
        estimates = null;
      }
    }
    this.patch({ whatIf, estimates });
  }

  /** Submit the operator's confirmed response for the current step. */
  async submit(response: 'yes' | 'no'): Promise<void> {
    const view = this.state.view;
    if (!view) throw new Error('no session loaded');
    if (this.state.readOnly || view.status !== 'active') return;
    if (this.state.submitting) return; // double-click guard
    const pending = this.state.pending ?? { response, step: view.trials + 1 };
    this.patch({ submitting: true, pending, lastError: null });
    try {
      const next = await this.api.recordResponse(view.id, pending.response, pending.step);
      this.patch({ view: next, pending: null, submitting: false });
      await this.refreshSidePanels();
    } catch (err) {
      if (err instanceof ServiceError) {
        if (err.body.code === 'stale-step') {
          // the earlier attempt landed; reconcile with the server
          this.patch({ pending: null, submitting: false, lastError: null });
          await this.load(view.id);
          return;
        }
        // surface the server error verbatim, drop the pending submission
        this.patch({ pending: null, submitting: false, lastError: err.body.message });
        return;
      }
      // network failure: keep the pending step for an explicit retry
      this.patch({ submitting: false, lastError: 'network failure; response not confirmed' });
    }
  }

  /** Re-send the pending response after a network failure. */
  async retry(): Promise<void> {
    if (!this.state.pending) return;
    await this.submit(this.state.pending.response);
  }
}

/** Demo mode: import a bundled session read-only and show its estimates. */
export async function openDemo(api: TrialApi, events: string): Promise<ConductorStore> {
  const store = new ConductorStore(api, true);
  const imported = await api.importSession(events);
  await store.load(imported.id);
  return store;
}
