/**
 * Patch embedding stores: turn a patch plan (exported by the pipeline's
 * `run --save-patch-plan`) into the replayable blob + index consumed by
 * its file-backed provider, including text embeddings for the material
 * names.
 */

import { promises as fs } from "fs";
import * as path from "path";
import { z } from "zod";

import { encodeTensor } from "./blob.js";
import { FeatureEncoder } from "./encoder.js";
import { readManifest } from "./manifest.js";
import { RgbImage, decodePng } from "./png.js";

const planSchema = z.object({
  requests: z.array(
    z.object({
      point: z.number().int(),
      view: z.number().int().min(0),
      scale: z.number().int().positive(),
      x0: z.number().int().min(0),
      y0: z.number().int().min(0),
      width: z.number().int().positive(),
      height: z.number().int().positive(),
    }),
  ),
});

export type PatchPlan = z.infer<typeof planSchema>;

function cropPatch(image: RgbImage, x0: number, y0: number, w: number, h: number): RgbImage {
  const pixels = new Uint8Array(w * h * 3);
  for (let y = 0; y < h; y++) {
    const src = ((y0 + y) * image.width + x0) * 3;
    pixels.set(image.pixels.subarray(src, src + w * 3), y * w * 3);
  }
  return { width: w, height: h, pixels };
}

export async function embedPatches(
  bundleDir: string,
  planPath: string,
  outPrefix: string,
  encoder: FeatureEncoder,
  materialNames: string[],
): Promise<{ rows: number; dim: number }> {
  const plan = planSchema.parse(JSON.parse(await fs.readFile(planPath, "utf-8")));
  const manifest = await readManifest(bundleDir);

  const images = new Map<number, RgbImage>();
  for (const req of plan.requests) {
    if (!images.has(req.view)) {
      const view = manifest.views[req.view];
      if (!view) {
        throw new Error(`patch plan references view ${req.view}, bundle has ${manifest.views.length}`);
      }
      images.set(req.view, decodePng(await fs.readFile(path.join(bundleDir, view.image))));
    }
  }

  const patches = plan.requests.map((req) =>
    cropPatch(images.get(req.view)!, req.x0, req.y0, req.width, req.height),
  );
  const embeddings = encoder.embedPatches(patches);
  const textVectors = encoder.embedText(materialNames);

  const data = new Float32Array(embeddings.length * encoder.dim);
  embeddings.forEach((vec, row) => data.set(vec, row * encoder.dim));
  await fs.writeFile(
    `${outPrefix}.f32`,
    encodeTensor({ dims: [Math.max(embeddings.length, 1), encoder.dim], data: embeddings.length ? data : new Float32Array(encoder.dim) }),
  );

  const index = {
    dim: encoder.dim,
    requests: plan.requests.map((req, row) => [req.point, req.view, req.scale, row]),
    text: Object.fromEntries(
      materialNames.map((name, i) => [name, Array.from(textVectors[i])]),
    ),
  };
  await fs.writeFile(`${outPrefix}.index.json`, JSON.stringify(index) + "\n");
  return { rows: embeddings.length, dim: encoder.dim };
}
