// Typed client for the trial-conduct service. The conductor displays only
// numbers that arrive through these calls; nothing is computed locally.

export interface Recommendation {
  level: number;
  treatment: number;
}

export interface ChainPoint {
  trial: number;
  level: number;
  treatment: number;
  response: 'yes' | 'no';
}

export interface SessionView {
  id: string;
  status: 'active' | 'completed';
  config: {
    grid: { levels: number[]; boundary: string };
    policy: { kind: string; [key: string]: unknown };
    start_level: number;
    n: number | null;
    seed: number;
    estimation: { target: number; ci: string; percentiles: number[] };
  };
  chain: ChainPoint[];
  trials: number;
  recommendation: Recommendation;
  diagnostics: {
    reversals: number;
    ad_cutoff: number | null;
    posterior_qp?: Record<string, number>;
  };
}

export interface WhatIfBranch {
  deterministic: boolean;
  next: number | null;
  up_probability?: number;
  override_probability?: number;
  bayes_override?: boolean;
}

export interface WhatIf {
  yes: WhatIfBranch;
  no: WhatIfBranch;
}

export interface EstimateCard {
  name: string;
  point?: number;
  se?: number | null;
  df?: number;
  percentiles?: number[];
  interval?: number[];
  method?: string;
  error?: string;
}

export interface Estimates {
  insufficient_data: boolean;
  trials: number;
  estimates: EstimateCard[];
}

export interface ServiceErrorBody {
  code: string;
  message: string;
  field?: string;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    public body: ServiceErrorBody,
  ) {
    super(body.message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class TrialApi {
  constructor(
    private base: string = '',
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'content-type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const res = await this.fetchImpl(this.base + path, init);
    const payload = await res.json();
    if (!res.ok) {
      throw new ServiceError(res.status, payload as ServiceErrorBody);
    }
    return payload as T;
  }

  createTrial(config: unknown): Promise<{ id: string; recommendation: Recommendation; status: string }> {
    return this.request('POST', '/trials', config);
  }

  getTrial(id: string): Promise<SessionView> {
    return this.request('GET', `/trials/${id}`);
  }

  recordResponse(
    id: string,
    response: 'yes' | 'no',
    step: number,
    note?: string,
  ): Promise<SessionView> {
    const body: Record<string, unknown> = { response, step };
    if (note) body.note = note;
    return this.request('POST', `/trials/${id}/responses`, body);
  }

  whatIf(id: string): Promise<WhatIf> {
    return this.request('GET', `/trials/${id}/what-if`);
  }

  estimates(id: string, target: number, estimators: string, ci: string): Promise<Estimates> {
    const q = `target=${target}&estimators=${estimators}&ci=${ci}`;
    return this.request('GET', `/trials/${id}/estimates?${q}`);
  }

  importSession(events: string): Promise<{ id: string; status: string; trials: number }> {
    return this.request('POST', '/trials/import', { events });
  }
}
