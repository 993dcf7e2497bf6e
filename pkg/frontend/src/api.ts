/**
 * Typed client for the retrieval service HTTP/JSON API.
 *
 * The frontend talks to the service exclusively through this module; no
 * retrieval logic lives client-side and scores are passed through verbatim.
 */

export type SearchMethod =
  | 'single'
  | 'collective'
  | 'fine'
  | 'coarse'
  | 'combination'
  | 'rerank';

export const ALL_METHODS: readonly SearchMethod[] = [
  'single',
  'collective',
  'fine',
  'coarse',
  'combination',
  'rerank',
];

export interface RankedFrame {
  frameId: string;
  score: number;
  timestamp: string;
  thumbnailUrl: string;
  captions: string[];
}

export interface SearchResponse {
  rankedFrames: RankedFrame[];
  timingMs: number;
}

export interface Topic {
  id: string;
  title: string;
  description: string;
}

export interface CaptionEntry {
  granularity: string;
  text: string;
}

export interface ContextFrame {
  frameId: string;
  timestamp: string;
  thumbnailUrl: string;
  isCenter: boolean;
  captions: CaptionEntry[];
}

export interface ContextResponse {
  center: string;
  frames: ContextFrame[];
}

export interface HealthResponse {
  status: string;
  loaded: boolean;
  methods: SearchMethod[];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && body.detail) detail = JSON.stringify(body.detail);
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, `HTTP ${response.status}: ${detail}`);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = '') {}

  /** Absolute URL for a service-relative path (thumbnails and the like). */
  resolve(path: string): string {
    return this.baseUrl + path;
  }

  async health(): Promise<HealthResponse> {
    return asJson(await fetch(this.resolve('/health')));
  }

  async topics(): Promise<Topic[]> {
    return asJson(await fetch(this.resolve('/topics')));
  }

  async search(
    query: string,
    method: SearchMethod,
    k: number,
    signal?: AbortSignal,
  ): Promise<SearchResponse> {
    const response = await fetch(this.resolve('/search'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ query, method, k }),
      signal,
    });
    return asJson(response);
  }

  async context(frameId: string, n = 2): Promise<ContextResponse> {
    const encoded = encodeURIComponent(frameId);
    return asJson(await fetch(this.resolve(`/frames/${encoded}/context?n=${n}`)));
  }
}
