/** Linear axis scales with d3-style "nice" tick placement, implemented
 * locally so the output never depends on a library's tie-breaking. */

export interface Scale {
  (x: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    // degenerate domain (single-point series): pad symmetrically
    const pad = d0 === 0 ? 1 : Math.abs(d0) * 0.5;
    d0 -= pad;
    d1 += pad;
  }
  const k = (range[1] - range[0]) / (d1 - d0);
  const f = (x: number) => range[0] + (x - d0) * k;
  f.domain = [d0, d1] as [number, number];
  f.range = range;
  return f;
}

const SQRT2 = Math.sqrt(2);
const SQRT10 = Math.sqrt(10);
const SQRT50 = Math.sqrt(50);

/** {1,2,5}*10^k tick positions with error-ratio rounding, dividing by an
 * inverse power of ten when the step is below one so decimal ticks come
 * out exactly (0.3, not 0.30000000000000004). */
export function ticks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) return [lo];
  const raw = (hi - lo) / Math.max(1, count);
  const power = Math.floor(Math.log10(raw));
  const error = raw / Math.pow(10, power);
  const factor = error >= SQRT50 ? 10 : error >= SQRT10 ? 5 : error >= SQRT2 ? 2 : 1;
  const out: number[] = [];
  if (power >= 0) {
    const step = factor * Math.pow(10, power);
    for (let i = Math.ceil(lo / step); i <= Math.floor(hi / step); i++) {
      out.push(i * step);
    }
  } else {
    const inv = Math.pow(10, -power) / factor;
    for (let i = Math.ceil(lo * inv); i <= Math.floor(hi * inv); i++) {
      out.push(i / inv);
    }
  }
  return out;
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}
