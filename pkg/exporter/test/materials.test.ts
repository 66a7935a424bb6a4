import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { compositeGrid, RgbImage } from "../src/png.js";
import { parseProposal, proposeMaterials, toMaterialsDocument } from "../src/materials.js";

const FIXTURE = path.join(__dirname, "..", "fixtures", "llm_response_wooden_table.json");

function solid(width: number, height: number, rgb: [number, number, number]): RgbImage {
  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    pixels.set(rgb, 3 * i);
  }
  return { width, height, pixels };
}

describe("offline material proposal", () => {
  it("replays the recorded response into a schema-valid dictionary", async () => {
    const dir = mkdtempSync(path.join(tmpdir(), "materials-"));
    const out = path.join(dir, "materials.json");
    const proposal = await proposeMaterials({
      imagePaths: [],
      outPath: out,
      offlinePath: FIXTURE,
    });
    expect(proposal.materials.length).toBeGreaterThanOrEqual(1);
    const names = proposal.materials.map((m) => m.name).join(" ");
    expect(names).toContain("wood");
    expect(names).toContain("steel");
    for (const m of proposal.materials) {
      expect(m.thickness_m).toBeGreaterThan(0);
    }

    const doc = JSON.parse(readFileSync(out, "utf-8"));
    expect(doc.source).toBe("llm");
    expect(doc.entries.length).toBe(proposal.materials.length);

    // raw response archived beside the output
    const raw = JSON.parse(readFileSync(`${out}.raw.json`, "utf-8"));
    expect(raw.choices[0].message.content).toContain("materials");
  });

  it("rejects malformed model output and preserves the raw text", async () => {
    const dir = mkdtempSync(path.join(tmpdir(), "materials-"));
    const bad = path.join(dir, "bad.json");
    writeFileSync(
      bad,
      JSON.stringify({
        choices: [{ message: { content: '{"materials": [{"name": "x"}]}' } }],
      }),
    );
    await expect(
      proposeMaterials({ imagePaths: [], outPath: path.join(dir, "m.json"), offlinePath: bad }),
    ).rejects.toThrow(/schema[\s\S]*raw content/);
  });

  it("rejects non-JSON content", () => {
    expect(() =>
      parseProposal({ choices: [{ message: { content: "definitely not json" } }] }),
    ).toThrow(/not JSON/);
  });

  it("converts proposals to the pipeline materials document", () => {
    const doc = toMaterialsDocument({
      materials: [
        { name: "glass", thickness_m: 0.004, properties: { density: [2400, 2600] } },
      ],
    }) as { source: string; entries: { name: string }[] };
    expect(doc.source).toBe("llm");
    expect(doc.entries[0].name).toBe("glass");
  });
});

describe("composite grid", () => {
  it("lays out four views in a 2x2 grid with padding", () => {
    const views = [
      solid(10, 8, [255, 0, 0]),
      solid(10, 8, [0, 255, 0]),
      solid(10, 8, [0, 0, 255]),
      solid(10, 8, [0, 0, 0]),
    ];
    const grid = compositeGrid(views, 4);
    expect(grid.width).toBe(2 * 10 + 3 * 4);
    expect(grid.height).toBe(2 * 8 + 3 * 4);
    // top-left cell pixel is red, padding is white
    const at = (4 * grid.width + 4) * 3;
    expect(Array.from(grid.pixels.slice(at, at + 3))).toEqual([255, 0, 0]);
    expect(Array.from(grid.pixels.slice(0, 3))).toEqual([255, 255, 255]);
  });

  it("uses a single row for two images", () => {
    const grid = compositeGrid([solid(6, 6, [1, 2, 3]), solid(6, 6, [4, 5, 6])], 2);
    expect(grid.width).toBe(2 * 6 + 3 * 2);
    expect(grid.height).toBe(6 + 2 * 2);
  });
});
