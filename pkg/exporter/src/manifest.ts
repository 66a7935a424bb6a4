/** Bundle manifest schema and directory helpers (mirrors the pipeline's format). */

import { promises as fs } from "fs";
import * as path from "path";
import { z } from "zod";

const intrinsicsSchema = z.object({
  fx: z.number().positive(),
  fy: z.number().positive(),
  cx: z.number().positive(),
  cy: z.number().positive(),
});

const poseSchema = z.object({
  rotation: z.array(z.number()).length(9),
  translation: z.array(z.number()).length(3),
});

const viewSchema = z.object({
  image: z.string(),
  depth: z.string(),
  features: z.string(),
  intrinsics: intrinsicsSchema,
  pose: poseSchema,
});

export const manifestSchema = z.object({
  format_version: z.number(),
  scene_id: z.string(),
  depth_unit: z.literal("m"),
  views: z.array(viewSchema).min(1),
  cloud: z.string(),
  gt_mass_kg: z.number().optional(),
  materials: z.string().optional(),
  reference_poses: z.string().optional(),
});

export type Manifest = z.infer<typeof manifestSchema>;

export async function readManifest(bundleDir: string): Promise<Manifest> {
  const raw = await fs.readFile(path.join(bundleDir, "manifest"), "utf-8");
  return manifestSchema.parse(JSON.parse(raw));
}

export async function writeManifest(bundleDir: string, manifest: Manifest): Promise<void> {
  await fs.writeFile(
    path.join(bundleDir, "manifest"),
    JSON.stringify(manifest, null, 1) + "\n",
  );
}
