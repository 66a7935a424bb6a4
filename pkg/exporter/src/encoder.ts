/**
 * Feature encoders.
 *
 * `FeatureEncoder` is the seam where a real pretrained backbone plugs in
 * (ONNX/tfjs exports of a vision transformer, hooked intermediate
 * layers). The built-in `StatsEncoder` is a deterministic fallback that
 * derives features from local image statistics, so the full export
 * workflow runs and validates without model weights on disk.
 */

import { RgbImage } from "./png.js";
import { Tensor } from "./blob.js";

export interface FeatureEncoder {
  /** Embedding width of both feature maps and patch embeddings. */
  readonly dim: number;
  /** Dense (hf, wf, dim) feature map over an image. */
  featureMap(image: RgbImage, hf: number, wf: number): Tensor;
  /** Unit-norm embedding per patch. */
  embedPatches(patches: RgbImage[]): Float32Array[];
  /** Unit-norm embedding per string. */
  embedText(names: string[]): Float32Array[];
}

function cellStats(
  image: RgbImage,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): number[] {
  const { width, pixels } = image;
  let n = 0;
  const mean = [0, 0, 0];
  const sq = [0, 0, 0];
  let gradX = 0;
  let gradY = 0;
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      const at = (y * width + x) * 3;
      for (let c = 0; c < 3; c++) {
        const v = pixels[at + c] / 255;
        mean[c] += v;
        sq[c] += v * v;
      }
      if (x + 1 < x1) {
        gradX += Math.abs(pixels[at] - pixels[at + 3]) / 255;
      }
      if (y + 1 < y1) {
        gradY += Math.abs(pixels[at] - pixels[at + 3 * width]) / 255;
      }
      n++;
    }
  }
  const out: number[] = [];
  for (let c = 0; c < 3; c++) {
    const m = mean[c] / n;
    out.push(m);
    out.push(Math.sqrt(Math.max(sq[c] / n - m * m, 0)));
  }
  out.push(gradX / n, gradY / n);
  return out; // 8 statistics
}

/** Deterministic hash -> PRNG for text embeddings (fnv1a + mulberry32). */
function hashSeed(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function seededUnitVector(seed: number, dim: number): Float32Array {
  let a = seed || 1;
  const next = () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  const vec = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    // Box-Muller; two uniforms per draw keeps the stream simple
    const u = Math.max(next(), 1e-12);
    const v = next();
    vec[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }
  return normalize(vec);
}

function normalize(vec: Float32Array): Float32Array {
  let norm = 0;
  for (const x of vec) norm += x * x;
  norm = Math.sqrt(norm) || 1;
  const out = new Float32Array(vec.length);
  for (let i = 0; i < vec.length; i++) out[i] = vec[i] / norm;
  return out;
}

export class StatsEncoder implements FeatureEncoder {
  readonly dim: number;

  constructor(dim = 16) {
    if (dim < 8) {
      throw new Error("stats encoder needs dim >= 8");
    }
    this.dim = dim;
  }

  featureMap(image: RgbImage, hf: number, wf: number): Tensor {
    const data = new Float32Array(hf * wf * this.dim);
    for (let fy = 0; fy < hf; fy++) {
      const y0 = Math.floor((fy * image.height) / hf);
      const y1 = Math.max(y0 + 1, Math.floor(((fy + 1) * image.height) / hf));
      for (let fx = 0; fx < wf; fx++) {
        const x0 = Math.floor((fx * image.width) / wf);
        const x1 = Math.max(x0 + 1, Math.floor(((fx + 1) * image.width) / wf));
        const stats = cellStats(image, x0, y0, Math.min(x1, image.width), Math.min(y1, image.height));
        const base = (fy * wf + fx) * this.dim;
        for (let i = 0; i < stats.length; i++) data[base + i] = stats[i];
      }
    }
    return { dims: [hf, wf, this.dim], data };
  }

  embedPatches(patches: RgbImage[]): Float32Array[] {
    return patches.map((patch) => {
      const vec = new Float32Array(this.dim);
      const stats = cellStats(patch, 0, 0, patch.width, patch.height);
      for (let i = 0; i < stats.length; i++) vec[i] = stats[i];
      // coarse 2x2 spatial layout of brightness in the remaining dims
      const extra = Math.min(this.dim - 8, 4);
      for (let q = 0; q < extra; q++) {
        const x0 = q % 2 === 0 ? 0 : Math.floor(patch.width / 2);
        const y0 = q < 2 ? 0 : Math.floor(patch.height / 2);
        const s = cellStats(
          patch,
          x0,
          y0,
          Math.max(x0 + 1, Math.min(x0 + Math.ceil(patch.width / 2), patch.width)),
          Math.max(y0 + 1, Math.min(y0 + Math.ceil(patch.height / 2), patch.height)),
        );
        vec[8 + q] = (s[0] + s[2] + s[4]) / 3;
      }
      return normalize(vec);
    });
  }

  embedText(names: string[]): Float32Array[] {
    return names.map((name) => seededUnitVector(hashSeed(name), this.dim));
  }
}
