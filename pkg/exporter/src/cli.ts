#!/usr/bin/env node
/**
 * Exporter CLI.
 *
 *   export-features --bundle IN --out OUT [--feature-size 32x32] [--dim 16]
 *   embed-patches --bundle DIR --plan plan.json --out PREFIX --materials m.json
 *   propose-materials --images a.png b.png ... --out materials.json
 *                     [--offline response.json] [--api-url URL] [--model M]
 *
 * Exit codes: 0 ok, 1 usage, 2 processing/validation failure.
 */

import { promises as fs } from "fs";
import * as process from "process";

import { embedPatches } from "./embedPatches.js";
import { StatsEncoder } from "./encoder.js";
import { exportFeatures } from "./exportFeatures.js";
import { proposeMaterials } from "./materials.js";

interface Args {
  positional: string[];
  flags: Map<string, string[]>;
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const flags = new Map<string, string[]>();
  let current: string | null = null;
  for (const token of argv) {
    if (token.startsWith("--")) {
      current = token.slice(2);
      if (!flags.has(current)) flags.set(current, []);
    } else if (current !== null) {
      flags.get(current)!.push(token);
    } else {
      positional.push(token);
    }
  }
  return { positional, flags };
}

function one(args: Args, name: string): string | undefined {
  const values = args.flags.get(name);
  return values && values.length > 0 ? values[values.length - 1] : undefined;
}

function required(args: Args, name: string): string {
  const value = one(args, name);
  if (value === undefined) {
    throw new UsageError(`missing required flag --${name}`);
  }
  return value;
}

class UsageError extends Error {}

async function cmdExportFeatures(args: Args): Promise<void> {
  const input = required(args, "bundle");
  const output = required(args, "out");
  const size = (one(args, "feature-size") ?? "32x32").toLowerCase().split("x");
  const dim = Number(one(args, "dim") ?? 16);
  const encoder = new StatsEncoder(dim);
  const result = await exportFeatures(input, output, encoder, {
    featureHeight: Number(size[0]),
    featureWidth: Number(size[1]),
  });
  console.log(
    `exported ${result.views} feature maps (${result.featureDims.join("x")}) to ${output}`,
  );
}

async function cmdEmbedPatches(args: Args): Promise<void> {
  const bundle = required(args, "bundle");
  const plan = required(args, "plan");
  const out = required(args, "out");
  const materialsPath = required(args, "materials");
  const dim = Number(one(args, "dim") ?? 16);
  const doc = JSON.parse(await fs.readFile(materialsPath, "utf-8"));
  const names: string[] = (doc.entries ?? []).map((e: { name: string }) => e.name);
  if (names.length === 0) {
    throw new Error(`materials file ${materialsPath} lists no entries`);
  }
  const result = await embedPatches(bundle, plan, out, new StatsEncoder(dim), names);
  console.log(`embedded ${result.rows} patches (dim ${result.dim}) into ${out}.f32`);
}

async function cmdProposeMaterials(args: Args): Promise<void> {
  const images = args.flags.get("images") ?? [];
  const offline = one(args, "offline");
  if (!offline && images.length === 0) {
    throw new UsageError("propose-materials needs --images (or --offline)");
  }
  const proposal = await proposeMaterials({
    imagePaths: images,
    outPath: required(args, "out"),
    offlinePath: offline,
    apiUrl: one(args, "api-url"),
    model: one(args, "model"),
    archivePath: one(args, "archive"),
  });
  console.log(
    `proposed ${proposal.materials.length} materials: ` +
      proposal.materials.map((m) => m.name).join(", "),
  );
}

const COMMANDS: Record<string, (args: Args) => Promise<void>> = {
  "export-features": cmdExportFeatures,
  "embed-patches": cmdEmbedPatches,
  "propose-materials": cmdProposeMaterials,
};

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  const handler = command ? COMMANDS[command] : undefined;
  if (!handler) {
    console.error(`usage: propfield-exporter <${Object.keys(COMMANDS).join(" | ")}> [flags]`);
    return 1;
  }
  try {
    await handler(parseArgs(rest));
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    if (code !== 0) process.exit(code);
  });
}
