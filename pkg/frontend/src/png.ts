/**
 * Minimal PNG codec built on node:zlib.
 *
 * Supports what the editor needs: encoding 1-bit grayscale masks and
 * 8-bit RGB/RGBA images, and decoding non-interlaced grayscale (1/8
 * bit), RGB, and RGBA files as produced by this module or by Pillow on
 * the server side.
 */

import { deflateSync, inflateSync } from "node:zlib";

export interface DecodedImage {
  width: number;
  height: number;
  /** Samples per pixel after decoding (1, 3, or 4), always 8-bit. */
  channels: number;
  pixels: Uint8Array;
}

const SIGNATURE = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(...parts: Uint8Array[]): number {
  let c = 0xffffffff;
  for (const part of parts) {
    for (const byte of part) {
      c = (CRC_TABLE[(c ^ byte) & 0xff] as number) ^ (c >>> 8);
    }
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const out = new Uint8Array(12 + data.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, data.length);
  out.set(typeBytes, 4);
  out.set(data, 8);
  view.setUint32(8 + data.length, crc32(typeBytes, data));
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const part of parts) {
    out.set(part, at);
    at += part.length;
  }
  return out;
}

function ihdr(
  width: number,
  height: number,
  bitDepth: number,
  colorType: number,
): Uint8Array {
  const data = new Uint8Array(13);
  const view = new DataView(data.buffer);
  view.setUint32(0, width);
  view.setUint32(4, height);
  data[8] = bitDepth;
  data[9] = colorType;
  return chunk("IHDR", data);
}

/** Encode a 0/1 mask as a 1-bit grayscale PNG (lossless transport). */
export function encodeMaskPNG(
  mask: Uint8Array,
  width: number,
  height: number,
): Uint8Array {
  if (mask.length !== width * height) {
    throw new Error(
      `mask has ${mask.length} entries, expected ${width * height}`,
    );
  }
  const rowBytes = Math.ceil(width / 8);
  const raw = new Uint8Array(height * (1 + rowBytes));
  for (let y = 0; y < height; y++) {
    const rowAt = y * (1 + rowBytes) + 1; // filter byte 0 precedes
    for (let x = 0; x < width; x++) {
      if (mask[y * width + x]) {
        raw[rowAt + (x >> 3)]! |= 0x80 >> (x & 7);
      }
    }
  }
  return concat([
    SIGNATURE,
    ihdr(width, height, 1, 0),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

/** Encode 8-bit RGB (channels=3) or RGBA (channels=4) pixels. */
export function encodePNG(
  pixels: Uint8Array,
  width: number,
  height: number,
  channels: 3 | 4 = 3,
): Uint8Array {
  if (pixels.length !== width * height * channels) {
    throw new Error(
      `pixel buffer has ${pixels.length} bytes, expected ` +
        `${width * height * channels}`,
    );
  }
  const rowBytes = width * channels;
  const raw = new Uint8Array(height * (1 + rowBytes));
  for (let y = 0; y < height; y++) {
    raw.set(
      pixels.subarray(y * rowBytes, (y + 1) * rowBytes),
      y * (1 + rowBytes) + 1,
    );
  }
  return concat([
    SIGNATURE,
    ihdr(width, height, 8, channels === 3 ? 2 : 6),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

function unfilter(
  raw: Uint8Array,
  height: number,
  rowBytes: number,
  bpp: number,
): Uint8Array {
  const out = new Uint8Array(height * rowBytes);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (1 + rowBytes)]!;
    const row = raw.subarray(y * (1 + rowBytes) + 1, (y + 1) * (1 + rowBytes));
    const at = y * rowBytes;
    const prev = y > 0 ? at - rowBytes : -1;
    for (let x = 0; x < rowBytes; x++) {
      const left = x >= bpp ? out[at + x - bpp]! : 0;
      const up = prev >= 0 ? out[prev + x]! : 0;
      const upLeft = prev >= 0 && x >= bpp ? out[prev + x - bpp]! : 0;
      let value = row[x]!;
      switch (filter) {
        case 0:
          break;
        case 1:
          value += left;
          break;
        case 2:
          value += up;
          break;
        case 3:
          value += (left + up) >> 1;
          break;
        case 4:
          value += paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unsupported PNG filter ${filter}`);
      }
      out[at + x] = value & 0xff;
    }
  }
  return out;
}

/** Decode a non-interlaced grayscale (1/8-bit), RGB, or RGBA PNG. */
export function decodePNG(bytes: Uint8Array): DecodedImage {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let at = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  const idat: Uint8Array[] = [];
  while (at < bytes.length) {
    const length = view.getUint32(at);
    const type = new TextDecoder().decode(bytes.subarray(at + 4, at + 8));
    const data = bytes.subarray(at + 8, at + 8 + length);
    if (type === "IHDR") {
      const hv = new DataView(data.buffer, data.byteOffset, data.byteLength);
      width = hv.getUint32(0);
      height = hv.getUint32(4);
      bitDepth = data[8]!;
      colorType = data[9]!;
      if (data[12] !== 0) throw new Error("interlaced PNG unsupported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  const channels = { 0: 1, 2: 3, 6: 4 }[colorType];
  if (channels === undefined) {
    throw new Error(`unsupported PNG color type ${colorType}`);
  }
  if (bitDepth !== 8 && !(bitDepth === 1 && colorType === 0)) {
    throw new Error(
      `unsupported PNG depth ${bitDepth} for color type ${colorType}`,
    );
  }
  const raw = new Uint8Array(inflateSync(concat(idat)));
  const rowBytes = Math.ceil((width * channels * bitDepth) / 8);
  const bpp = Math.max(1, (channels * bitDepth) / 8);
  const rows = unfilter(raw, height, rowBytes, bpp);
  if (bitDepth === 1) {
    const pixels = new Uint8Array(width * height);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const bit = (rows[y * rowBytes + (x >> 3)]! >> (7 - (x & 7))) & 1;
        pixels[y * width + x] = bit ? 255 : 0;
      }
    }
    return { width, height, channels: 1, pixels };
  }
  return { width, height, channels, pixels: rows };
}
