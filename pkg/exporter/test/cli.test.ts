import { spawnSync } from "child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

const CLI = path.join(__dirname, "..", "dist", "cli.js");
const FIXTURE = path.join(__dirname, "..", "fixtures", "llm_response_wooden_table.json");

const run = (args: string[]) =>
  spawnSync("node", [CLI, ...args], { encoding: "utf-8", timeout: 120_000 });

describe.skipIf(!existsSync(CLI))("built CLI", () => {
  it("prints usage and exits 1 for unknown commands", () => {
    const res = run(["shred-everything"]);
    expect(res.status).toBe(1);
    expect(res.stderr).toContain("usage");
  });

  it("propose-materials --offline writes the dictionary and archive", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "cli-"));
    const out = path.join(dir, "materials.json");
    const res = run(["propose-materials", "--offline", FIXTURE, "--out", out]);
    expect(res.status, res.stderr).toBe(0);
    expect(res.stdout).toContain("oak wood");
    const doc = JSON.parse(readFileSync(out, "utf-8"));
    expect(doc.entries.length).toBe(3);
    expect(existsSync(`${out}.raw.json`)).toBe(true);
  });

  it("propose-materials exits 2 on a malformed response", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "cli-"));
    const bad = path.join(dir, "bad.json");
    writeFileSync(bad, '{"choices": [{"message": {"content": "nope"}}]}');
    const res = run(["propose-materials", "--offline", bad, "--out", path.join(dir, "m.json")]);
    expect(res.status).toBe(2);
    expect(res.stderr).toContain("not JSON");
  });

  it("export-features exits 2 when the bundle is missing", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "cli-"));
    const res = run(["export-features", "--bundle", path.join(dir, "nope"), "--out", path.join(dir, "out")]);
    expect(res.status).toBe(2);
  });
});
