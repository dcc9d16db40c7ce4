// Temperature to color: linear blend from pure blue at the cold end to
// pure red at the hot end, clamped outside [tmin, tmax].

export interface ColorScale {
  tmin: number;
  tmax: number;
}

export const DEFAULT_SCALE: ColorScale = { tmin: 15, tmax: 35 };

export function tempColor(value: number, scale: ColorScale = DEFAULT_SCALE): [number, number, number] {
  const span = scale.tmax - scale.tmin;
  let t = span > 0 ? (value - scale.tmin) / span : 0.5;
  t = Math.min(Math.max(t, 0), 1);
  return [t, 0, 1 - t];
}

export function fillColors(
  values: Float32Array, out: Float32Array, scale: ColorScale = DEFAULT_SCALE,
): Float32Array {
  const span = scale.tmax - scale.tmin;
  for (let k = 0; k < values.length; k++) {
    let t = span > 0 ? (values[k] - scale.tmin) / span : 0.5;
    t = Math.min(Math.max(t, 0), 1);
    out[3 * k] = t;
    out[3 * k + 1] = 0;
    out[3 * k + 2] = 1 - t;
  }
  return out;
}

export function cssColor(value: number, scale: ColorScale = DEFAULT_SCALE): string {
  const [r, g, b] = tempColor(value, scale);
  return `rgb(${Math.round(r * 255)},${Math.round(g * 255)},${Math.round(b * 255)})`;
}
