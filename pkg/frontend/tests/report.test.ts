import { describe, expect, it } from 'vitest';

import type { Report } from '../src/api.js';
import { renderReportHtml, reportView } from '../src/report.js';

function report948(): Report {
  return {
    cells: {
      label: { pipeline: { correct: 500, reviewed: 520, accuracy: 500 / 520, percent: 96.2 } },
      query: { pipeline: { correct: 448, reviewed: 480, accuracy: 448 / 480, percent: 93.3 } },
    },
    kinds: ['label', 'query'],
    models: ['pipeline'],
    overall: { correct: 948, reviewed: 1000, accuracy: 0.948, percent: 94.8 },
    pending: 0,
    total: 1000,
  };
}

describe('reportView', () => {
  it('renders the 948/1000 fixture as 94.8 overall', () => {
    const view = reportView(report948());
    expect(view.overall).toBe('94.8');
    expect(view.rows.map((r) => r.label)).toEqual(['label', 'query']);
    expect(view.rows[0].values).toEqual(['96.2']);
  });

  it('shows dashes when nothing is reviewed', () => {
    const empty: Report = {
      cells: {},
      kinds: [],
      models: [],
      overall: null,
      pending: 10,
      total: 10,
    };
    const view = reportView(empty);
    expect(view.overall).toBe('-');
    expect(view.footer).toBe('nothing reviewed yet');
  });

  it('renders absent cells as dashes, not zeros', () => {
    const report = report948();
    report.models = ['pipeline', 'end_to_end'];
    const view = reportView(report);
    expect(view.rows[0].values).toEqual(['96.2', '-']);
  });

  it('emits an overall row in the HTML', () => {
    const html = renderReportHtml(report948());
    expect(html).toContain('overall after filtering');
    expect(html).toContain('94.8');
    expect(html).toContain('1000 reviewed');
  });
});
