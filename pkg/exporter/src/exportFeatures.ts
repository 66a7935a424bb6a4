/**
 * Feature export: run the encoder over every view of a capture and emit a
 * bundle directory in the pipeline's format.
 *
 * Input is an existing bundle directory (carrying images, depths, poses,
 * and the point cloud from the reconstruction stage); output is the same
 * bundle with freshly encoded per-view feature blobs. Exports are
 * deterministic: the same images and encoder produce identical bytes.
 */

import { promises as fs } from "fs";
import * as path from "path";

import { encodeTensor } from "./blob.js";
import { FeatureEncoder } from "./encoder.js";
import { Manifest, readManifest, writeManifest } from "./manifest.js";
import { decodePng } from "./png.js";

export interface ExportOptions {
  featureHeight: number;
  featureWidth: number;
}

export interface ExportResult {
  views: number;
  featureDims: number[];
  manifest: Manifest;
}

export async function exportFeatures(
  inputDir: string,
  outputDir: string,
  encoder: FeatureEncoder,
  options: ExportOptions,
): Promise<ExportResult> {
  const manifest = await readManifest(inputDir);
  await fs.mkdir(outputDir, { recursive: true });

  const dims = [options.featureHeight, options.featureWidth, encoder.dim];
  for (let i = 0; i < manifest.views.length; i++) {
    const view = manifest.views[i];
    const viewDir = path.join(outputDir, "views", String(i));
    await fs.mkdir(viewDir, { recursive: true });

    const imageBytes = await fs.readFile(path.join(inputDir, view.image));
    const image = decodePng(imageBytes);
    const fmap = encoder.featureMap(image, options.featureHeight, options.featureWidth);
    await fs.writeFile(path.join(outputDir, view.features), encodeTensor(fmap));

    if (path.resolve(inputDir) !== path.resolve(outputDir)) {
      await fs.copyFile(path.join(inputDir, view.image), path.join(outputDir, view.image));
      await fs.copyFile(path.join(inputDir, view.depth), path.join(outputDir, view.depth));
    }
  }

  if (path.resolve(inputDir) !== path.resolve(outputDir)) {
    await fs.copyFile(path.join(inputDir, manifest.cloud), path.join(outputDir, manifest.cloud));
    for (const extra of [manifest.materials, manifest.reference_poses]) {
      if (extra) {
        await fs.copyFile(path.join(inputDir, extra), path.join(outputDir, extra));
      }
    }
    await writeManifest(outputDir, manifest);
  }

  return { views: manifest.views.length, featureDims: dims, manifest };
}
