/**
 * Material proposal: ask a vision LLM for candidate materials of the
 * captured object, with physical property values in SI units and an
 * estimated shell thickness per material.
 *
 * A few viewpoints are composited into one image (occluded parts are the
 * main failure mode of single-view prompts) and sent with a prompt that
 * demands strict JSON. Temperature 0: parseability over prose. The raw
 * response is always archived next to the output; `--offline` replays a
 * previously captured response file through the same parse path.
 */

import { promises as fs } from "fs";
import { z } from "zod";

import { RgbImage, compositeGrid, decodePng, encodePng } from "./png.js";

const valueOrRange = z.union([
  z.number(),
  z.tuple([z.number(), z.number()]),
]);

const proposalSchema = z.object({
  description: z.string().optional(),
  materials: z
    .array(
      z.object({
        name: z.string().min(1),
        thickness_m: z.number().positive(),
        properties: z.record(z.string(), valueOrRange),
      }),
    )
    .min(1),
});

export type MaterialProposal = z.infer<typeof proposalSchema>;

const responseSchema = z.object({
  choices: z
    .array(z.object({ message: z.object({ content: z.string() }) }))
    .min(1),
});

export const PROMPT = `You are given a composite image showing an object from several viewpoints.
Identify the candidate materials the object is made of and respond with STRICT JSON only, no prose, matching:
{
  "description": "<one sentence on the object>",
  "materials": [
    {
      "name": "<material name>",
      "thickness_m": <estimated shell thickness in meters, > 0>,
      "properties": {
        "density": <kg/m^3, number or [min, max]>,
        "elastic_modulus": <GPa, number or [min, max]>,
        "hardness_shore": <Shore, number or [min, max]>,
        "thermal_conductivity": <W/(mK), number or [min, max]>
      }
    }
  ]
}
List every visibly distinct material (1 to 6 entries). Use SI units exactly as specified.`;

export interface ProposeOptions {
  imagePaths: string[];
  outPath: string;
  offlinePath?: string;
  apiUrl?: string;
  model?: string;
  apiKey?: string;
  maxAttempts?: number;
  archivePath?: string;
}

export async function buildComposite(imagePaths: string[]): Promise<RgbImage> {
  if (imagePaths.length < 1) {
    throw new Error("material proposal needs at least one image");
  }
  const picked = imagePaths.slice(0, 4); // 2-4 viewpoints in a 2x2 grid
  const images = await Promise.all(
    picked.map(async (p) => decodePng(await fs.readFile(p))),
  );
  return compositeGrid(images);
}

async function queryApi(
  composite: RgbImage,
  options: ProposeOptions,
): Promise<unknown> {
  const apiKey = options.apiKey ?? process.env.OPENAI_API_KEY;
  if (!apiKey) {
    throw new Error("no API key: set OPENAI_API_KEY or run with --offline");
  }
  const url = options.apiUrl ?? "https://api.openai.com/v1/chat/completions";
  const body = {
    model: options.model ?? "gpt-4o",
    temperature: 0,
    response_format: { type: "json_object" },
    messages: [
      {
        role: "user",
        content: [
          { type: "text", text: PROMPT },
          {
            type: "image_url",
            image_url: {
              url: `data:image/png;base64,${encodePng(composite).toString("base64")}`,
            },
          },
        ],
      },
    ],
  };

  const attempts = options.maxAttempts ?? 3;
  let lastError: unknown;
  for (let attempt = 1; attempt <= attempts; attempt++) {
    try {
      const res = await fetch(url, {
        method: "POST",
        headers: {
          "content-type": "application/json",
          authorization: `Bearer ${apiKey}`,
        },
        body: JSON.stringify(body),
      });
      if (!res.ok) {
        throw new Error(`API returned ${res.status}: ${await res.text()}`);
      }
      return await res.json();
    } catch (err) {
      lastError = err;
    }
  }
  throw new Error(`material proposal failed after ${attempts} attempts: ${lastError}`);
}

export function parseProposal(rawResponse: unknown): MaterialProposal {
  const response = responseSchema.safeParse(rawResponse);
  if (!response.success) {
    throw new Error(`response is not a chat completion: ${response.error.message}`);
  }
  const content = response.data.choices[0].message.content;
  let doc: unknown;
  try {
    doc = JSON.parse(content);
  } catch (err) {
    throw new Error(`model output is not JSON: ${err}\n--- raw content ---\n${content}`);
  }
  const parsed = proposalSchema.safeParse(doc);
  if (!parsed.success) {
    throw new Error(
      `model output violates the materials schema: ${parsed.error.message}\n--- raw content ---\n${content}`,
    );
  }
  return parsed.data;
}

/** Convert a proposal into the pipeline's materials.json document. */
export function toMaterialsDocument(proposal: MaterialProposal): object {
  return {
    source: "llm",
    entries: proposal.materials.map((m) => ({
      name: m.name,
      thickness_m: m.thickness_m,
      properties: m.properties,
    })),
  };
}

export async function proposeMaterials(options: ProposeOptions): Promise<MaterialProposal> {
  let raw: unknown;
  if (options.offlinePath) {
    raw = JSON.parse(await fs.readFile(options.offlinePath, "utf-8"));
  } else {
    const composite = await buildComposite(options.imagePaths);
    raw = await queryApi(composite, options);
  }

  const archivePath = options.archivePath ?? `${options.outPath}.raw.json`;
  await fs.writeFile(archivePath, JSON.stringify(raw, null, 1) + "\n");

  const proposal = parseProposal(raw);
  await fs.writeFile(
    options.outPath,
    JSON.stringify(toMaterialsDocument(proposal), null, 2) + "\n",
  );
  return proposal;
}
