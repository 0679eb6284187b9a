// DOM-level checks for item rendering, with the API mocked out.

import { beforeEach, describe, expect, it, vi } from 'vitest';

import { ApiClient, type Report, type ReviewItem } from '../src/api.js';
import { Console } from '../src/main.js';

function skeleton(): void {
  document.body.innerHTML = `
    <canvas id="viewer"></canvas>
    <p id="position"></p><p id="entity"></p><p id="hypernyms" hidden></p>
    <p id="context"></p><p id="status"></p><section id="report"></section>
    <input id="opacity" type="range" min="0" max="100" value="45" />
  `;
}

const EMPTY_REPORT: Report = {
  cells: {},
  kinds: [],
  models: [],
  overall: null,
  pending: 2,
  total: 2,
};

function item(id: number, overrides: Partial<ReviewItem> = {}): ReviewItem {
  return {
    annotation_id: id,
    image_ref: `${id}.png`,
    rle: { size: [2, 2], counts: [0, 4] },
    entity_id: `Q${id}`,
    entity_label: `Entity ${id}`,
    hypernyms: ['vegetable'],
    reference_kind: 'intension',
    source_model: 'end_to_end',
    split: 'query',
    query: 'what is on the plate?',
    verdict: 'pending',
    note: '',
    ...overrides,
  };
}

function mockedApi(items: ReviewItem[]): ApiClient {
  const api = new ApiClient('');
  api.listItems = vi.fn(async () => ({ items, total: items.length }));
  api.getReport = vi.fn(async () => EMPTY_REPORT);
  api.imageUrl = (id: number) => `/items/${id}/image`;
  return api;
}

async function startConsole(items: ReviewItem[]): Promise<Console> {
  skeleton();
  const app = new Console(mockedApi(items));
  (app as unknown as { loadImage: () => Promise<void> }).loadImage = async () => {};
  await app.start();
  return app;
}

describe('Console rendering', () => {
  beforeEach(() => {
    document.body.innerHTML = '';
  });

  it('shows entity context with hypernyms', async () => {
    await startConsole([item(1)]);
    expect(document.getElementById('entity')?.textContent).toBe('Entity 1');
    const hypernyms = document.getElementById('hypernyms') as HTMLElement;
    expect(hypernyms.hidden).toBe(false);
    expect(hypernyms.textContent).toContain('vegetable');
    expect(document.getElementById('context')?.textContent).toContain('intension reference');
    expect(document.getElementById('context')?.textContent).toContain('end_to_end model');
  });

  it('hides the hypernym row when the entity has none', async () => {
    await startConsole([item(1, { hypernyms: [] })]);
    expect((document.getElementById('hypernyms') as HTMLElement).hidden).toBe(true);
  });

  it('flags a malformed mask and allows skipping past it', async () => {
    const bad = item(1, { rle: { size: [2, 2], counts: [0, 1, 99] } });
    const app = await startConsole([bad, item(2)]);
    await app.drawOverlay();
    expect(document.getElementById('status')?.textContent).toContain('malformed mask');
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 's' }));
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(document.getElementById('entity')?.textContent).toBe('Entity 2');
  });

  it('renders the empty report as dashes', async () => {
    await startConsole([item(1)]);
    expect(document.getElementById('report')?.textContent).toContain('nothing reviewed yet');
  });
});
