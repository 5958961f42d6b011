// Results view: fraction-believed-real vs presentation time, one curve per
// source, error bars = the backend's inter-subject sigma.  This module is
// a pure view -- every number drawn here is copied verbatim out of the
// /results payload; nothing is recomputed client-side.

import type { ResultCell, ResultsPayload } from "./api.js";

const SOURCE_COLORS: Record<string, string> = {
  real: "#2c7a2c",
  gan: "#b23a3a",
  lapgan: "#2c5aa0",
  "cc-lapgan": "#8050a0",
};

export type ChartGeometry = {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
};

export const DEFAULT_GEOMETRY: ChartGeometry = {
  width: 640,
  height: 360,
  margin: { top: 16, right: 120, bottom: 40, left: 48 },
};

function color(source: string): string {
  return SOURCE_COLORS[source] ?? "#666666";
}

// x is log-scaled in duration; y is linear in [0, 1].
export function makeScales(durations: number[], geo: ChartGeometry) {
  const lo = Math.log(Math.min(...durations));
  const hi = Math.log(Math.max(...durations));
  const plotW = geo.width - geo.margin.left - geo.margin.right;
  const plotH = geo.height - geo.margin.top - geo.margin.bottom;
  const x = (d: number) =>
    geo.margin.left + (hi === lo ? plotW / 2 : ((Math.log(d) - lo) / (hi - lo)) * plotW);
  const y = (frac: number) => geo.margin.top + (1 - frac) * plotH;
  return { x, y, plotW, plotH };
}

function groupBySource(cells: ResultCell[]): Map<string, ResultCell[]> {
  const groups = new Map<string, ResultCell[]>();
  for (const c of cells) {
    const arr = groups.get(c.source) ?? [];
    arr.push(c);
    groups.set(c.source, arr);
  }
  for (const arr of groups.values()) arr.sort((a, b) => a.duration_ms - b.duration_ms);
  return groups;
}

export function renderResultsSvg(
  payload: ResultsPayload,
  geo: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  if (payload.cells.length === 0) {
    return `<div class="placeholder">No responses recorded yet.</div>`;
  }
  const durations =
    payload.durations.length > 0
      ? payload.durations
      : [...new Set(payload.cells.map((c) => c.duration_ms))];
  const { x, y } = makeScales(durations, geo);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${geo.width}" height="${geo.height}"` +
      ` viewBox="0 0 ${geo.width} ${geo.height}" class="results-chart">`,
  );

  // frame + y gridlines at 0, .25, .5, .75, 1
  for (const f of [0, 0.25, 0.5, 0.75, 1]) {
    const yy = y(f);
    parts.push(
      `<line x1="${geo.margin.left}" y1="${yy}" x2="${geo.width - geo.margin.right}"` +
        ` y2="${yy}" stroke="#ddd"/>`,
      `<text x="${geo.margin.left - 6}" y="${yy + 4}" text-anchor="end" font-size="11">${f}</text>`,
    );
  }
  for (const d of durations) {
    const xx = x(d);
    const yb = y(0);
    parts.push(
      `<line x1="${xx}" y1="${yb}" x2="${xx}" y2="${yb + 4}" stroke="#888"/>`,
      `<text x="${xx}" y="${yb + 16}" text-anchor="middle" font-size="10">${d}</text>`,
    );
  }
  parts.push(
    `<text x="${(geo.margin.left + geo.width - geo.margin.right) / 2}"` +
      ` y="${geo.height - 6}" text-anchor="middle" font-size="11">presentation time (ms, log)</text>`,
  );

  const groups = groupBySource(payload.cells);
  let legendY = geo.margin.top + 8;
  for (const [source, cells] of groups) {
    const col = color(source);
    const pts = cells.map((c) => `${x(c.duration_ms)},${y(c.fraction_real)}`).join(" ");
    parts.push(
      `<polyline data-source="${source}" points="${pts}" fill="none" stroke="${col}" stroke-width="1.5"/>`,
    );
    for (const c of cells) {
      const cx = x(c.duration_ms);
      if (c.sigma !== null) {
        const yTop = y(c.fraction_real + c.sigma);
        const yBot = y(c.fraction_real - c.sigma);
        parts.push(
          `<line data-role="errbar" data-source="${source}" data-duration="${c.duration_ms}"` +
            ` data-sigma="${c.sigma}" x1="${cx}" y1="${yTop}" x2="${cx}" y2="${yBot}"` +
            ` stroke="${col}" stroke-width="1"/>`,
        );
      }
      parts.push(
        `<circle data-role="point" data-source="${source}" data-duration="${c.duration_ms}"` +
          ` data-frac="${c.fraction_real}" data-sigma="${c.sigma === null ? "" : c.sigma}"` +
          ` data-subjects="${c.n_subjects}" data-trials="${c.n_trials}"` +
          ` cx="${cx}" cy="${y(c.fraction_real)}" r="3.5" fill="${col}"/>`,
      );
    }
    parts.push(
      `<rect x="${geo.width - geo.margin.right + 10}" y="${legendY - 8}" width="10" height="10" fill="${col}"/>`,
      `<text x="${geo.width - geo.margin.right + 24}" y="${legendY + 1}" font-size="11">${source}</text>`,
    );
    legendY += 16;
  }
  parts.push("</svg>");
  return parts.join("\n");
}
