/** Thin PNG helpers over pngjs: decode to RGB, encode, and grid composites. */

import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Interleaved RGB, length width * height * 3. */
  pixels: Uint8Array;
}

export function decodePng(buf: Buffer): RgbImage {
  const png = PNG.sync.read(buf);
  const pixels = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i];
    pixels[3 * i + 1] = png.data[4 * i + 1];
    pixels[3 * i + 2] = png.data[4 * i + 2];
  }
  return { width: png.width, height: png.height, pixels };
}

export function encodePng(image: RgbImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    png.data[4 * i] = image.pixels[3 * i];
    png.data[4 * i + 1] = image.pixels[3 * i + 1];
    png.data[4 * i + 2] = image.pixels[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

/**
 * Compose up to four images into a 2x2 grid on white, preserving sizes.
 * A single row is used for two images or fewer.
 */
export function compositeGrid(images: RgbImage[], pad = 8): RgbImage {
  if (images.length === 0) {
    throw new Error("composite needs at least one image");
  }
  const cols = images.length <= 2 ? images.length : 2;
  const rows = Math.ceil(images.length / cols);
  const cellW = Math.max(...images.map((im) => im.width));
  const cellH = Math.max(...images.map((im) => im.height));
  const width = cols * cellW + (cols + 1) * pad;
  const height = rows * cellH + (rows + 1) * pad;
  const pixels = new Uint8Array(width * height * 3).fill(255);

  images.forEach((im, idx) => {
    const cx = (idx % cols) * (cellW + pad) + pad;
    const cy = Math.floor(idx / cols) * (cellH + pad) + pad;
    for (let y = 0; y < im.height; y++) {
      for (let x = 0; x < im.width; x++) {
        const dst = ((cy + y) * width + cx + x) * 3;
        const src = (y * im.width + x) * 3;
        pixels[dst] = im.pixels[src];
        pixels[dst + 1] = im.pixels[src + 1];
        pixels[dst + 2] = im.pixels[src + 2];
      }
    }
  });
  return { width, height, pixels };
}
