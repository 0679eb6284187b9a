// The report panel is a pure rendering of GET /report: rows are reference
// kinds, columns are models, plus the overall-after-filtering row. No
// client-side accuracy arithmetic beyond formatting.

import type { Report } from './api.js';

export interface ReportRow {
  label: string;
  values: string[]; // one per model column, '-' when the cell is absent
}

export interface ReportView {
  header: string[];
  rows: ReportRow[];
  overall: string; // percent of the overall row, '-' when nothing is reviewed
  footer: string;
}

export function reportView(report: Report): ReportView {
  const header = ['reference', ...report.models];
  const rows: ReportRow[] = report.kinds.map((kind) => ({
    label: kind,
    values: report.models.map((model) => {
      const cell = report.cells[kind]?.[model];
      return cell ? cell.percent.toFixed(1) : '-';
    }),
  }));
  const overall = report.overall ? report.overall.percent.toFixed(1) : '-';
  const footer = report.overall
    ? `${report.overall.reviewed} reviewed, ${report.pending} pending`
    : 'nothing reviewed yet';
  return { header, rows, overall, footer };
}

export function renderReportHtml(report: Report): string {
  const view = reportView(report);
  const span = Math.max(view.header.length - 1, 1);
  const head = view.header.map((h) => `<th>${escapeHtml(h)}</th>`).join('');
  const body = view.rows
    .map(
      (row) =>
        `<tr><td>${escapeHtml(row.label)}</td>${row.values
          .map((v) => `<td>${escapeHtml(v)}</td>`)
          .join('')}</tr>`,
    )
    .join('');
  const overallRow = `<tr class="overall"><td>overall after filtering</td><td colspan="${span}">${escapeHtml(view.overall)}</td></tr>`;
  return (
    `<table><thead><tr>${head}</tr></thead><tbody>${body}${overallRow}</tbody></table>` +
    `<p class="report-totals">${escapeHtml(view.footer)}</p>`
  );
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}
