import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

function okResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('ApiClient', () => {
  it('posts search requests with the exact wire shape', async () => {
    const fetchSpy = vi.fn(async () => okResponse({ rankedFrames: [], timingMs: 1 }));
    vi.stubGlobal('fetch', fetchSpy);
    const client = new ApiClient('http://svc:1234');
    await client.search('ice cream', 'combination', 10);
    expect(fetchSpy).toHaveBeenCalledOnce();
    const [url, init] = fetchSpy.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe('http://svc:1234/search');
    expect(init.method).toBe('POST');
    expect(JSON.parse(init.body as string)).toEqual({
      query: 'ice cream',
      method: 'combination',
      k: 10,
    });
  });

  it('passes the abort signal through', async () => {
    const fetchSpy = vi.fn(async () => okResponse({ rankedFrames: [], timingMs: 1 }));
    vi.stubGlobal('fetch', fetchSpy);
    const controller = new AbortController();
    await new ApiClient().search('x', 'single', 5, controller.signal);
    const [, init] = fetchSpy.mock.calls[0] as unknown as [string, RequestInit];
    expect(init.signal).toBe(controller.signal);
  });

  it('encodes frame ids in context URLs', async () => {
    const fetchSpy = vi.fn(async () => okResponse({ center: 'a b', frames: [] }));
    vi.stubGlobal('fetch', fetchSpy);
    await new ApiClient().context('a b', 3);
    expect(fetchSpy.mock.calls[0][0]).toBe('/frames/a%20b/context?n=3');
  });

  it('raises ApiError with the service detail on failure', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => new Response(JSON.stringify({ detail: 'index not loaded' }), {
        status: 503,
      })),
    );
    const error = await new ApiClient().search('x', 'single', 5).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(503);
    expect(error.message).toContain('index not loaded');
  });
});
