/**
 * Mask painting surface: brush and eraser strokes rasterized at image
 * resolution, exported as a lossless 1-bit PNG so the server never has
 * to re-rasterize gestures.
 */

import { decodePNG, encodeMaskPNG } from "./png.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export class MaskCanvas {
  readonly width: number;
  readonly height: number;
  /** Row-major 0/1 coverage. */
  readonly data: Uint8Array;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) {
      throw new Error(`invalid canvas size ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  /** Stamp one circular brush tip. */
  dab(cx: number, cy: number, radius: number, erase = false): void {
    const r2 = radius * radius;
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = erase ? 0 : 1;
        }
      }
    }
  }

  /** Rasterize a polyline gesture by stamping along each segment. */
  stroke(points: StrokePoint[], width: number, erase = false): void {
    if (points.length === 0) return;
    const radius = Math.max(0.5, width / 2);
    let prev = points[0]!;
    this.dab(prev.x, prev.y, radius, erase);
    for (const point of points.slice(1)) {
      const steps =
        Math.ceil(Math.max(Math.abs(point.x - prev.x), Math.abs(point.y - prev.y))) + 1;
      for (let i = 1; i <= steps; i++) {
        const t = i / steps;
        this.dab(
          prev.x + t * (point.x - prev.x),
          prev.y + t * (point.y - prev.y),
          radius,
          erase,
        );
      }
      prev = point;
    }
  }

  fill(): void {
    this.data.fill(1);
  }

  clear(): void {
    this.data.fill(0);
  }

  /** Number of masked pixels (the client-side area measurement). */
  area(): number {
    let n = 0;
    for (const v of this.data) n += v;
    return n;
  }

  isEmpty(): boolean {
    return this.area() === 0;
  }

  toPNG(): Uint8Array {
    return encodeMaskPNG(this.data, this.width, this.height);
  }

  static fromPNG(bytes: Uint8Array): MaskCanvas {
    const img = decodePNG(bytes);
    if (img.channels !== 1) {
      throw new Error("mask PNG must be grayscale");
    }
    const canvas = new MaskCanvas(img.width, img.height);
    for (let i = 0; i < img.pixels.length; i++) {
      canvas.data[i] = img.pixels[i]! >= 128 ? 1 : 0;
    }
    return canvas;
  }
}

/**
 * Outline the mask's bounding box in red on RGB pixels (the gallery's
 * edited-region highlight). Returns a copy.
 */
export function outlineEditRegion(
  pixels: Uint8Array,
  width: number,
  height: number,
  mask: MaskCanvas,
): Uint8Array {
  if (mask.width !== width || mask.height !== height) {
    throw new Error("mask and image dimensions differ");
  }
  let x0 = width;
  let y0 = height;
  let x1 = -1;
  let y1 = -1;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (mask.data[y * width + x]) {
        if (x < x0) x0 = x;
        if (y < y0) y0 = y;
        if (x > x1) x1 = x;
        if (y > y1) y1 = y;
      }
    }
  }
  const out = Uint8Array.from(pixels);
  if (x1 < 0) return out; // empty mask: nothing to outline
  const paint = (x: number, y: number) => {
    const at = (y * width + x) * 3;
    out[at] = 255;
    out[at + 1] = 0;
    out[at + 2] = 0;
  };
  for (let x = x0; x <= x1; x++) {
    paint(x, y0);
    paint(x, y1);
  }
  for (let y = y0; y <= y1; y++) {
    paint(x0, y);
    paint(x1, y);
  }
  return out;
}
