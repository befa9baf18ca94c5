/**
 * Node bindings over the obbkit command-line tool.
 *
 * Every operation shells out to the CLI and exchanges data through its JSON
 * formats, so results are bitwise identical to the Python package: floats
 * are serialized with shortest round-trip precision on both sides.
 *
 * The CLI invocation defaults to `python3 -m obbkit` and can be overridden
 * with the OBBKIT_BIN environment variable (e.g. a path to the installed
 * `obbkit` script).
 */
import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** One oriented box: [cx, cy, w, h, theta] with theta in radians. */
export type BoxRow = readonly [number, number, number, number, number];
export type BoxArray = ReadonlyArray<BoxRow | ReadonlyArray<number>>;

export interface AnnotationRecord {
  cx: number;
  cy: number;
  w: number;
  h: number;
  theta: number;
  category: string;
  difficult: boolean;
}

export interface EvalReport {
  metric: string;
  iou_thr: number;
  per_class: Record<string, number>;
  map: number;
}

function cliCommand(): string[] {
  const override = process.env.OBBKIT_BIN;
  return override ? override.split(" ") : ["python3", "-m", "obbkit"];
}

function runCli(args: string[]): string {
  const [cmd, ...prefix] = cliCommand();
  try {
    return execFileSync(cmd, [...prefix, ...args], { encoding: "utf8" });
  } catch (err) {
    const anyErr = err as { stderr?: Buffer | string; message?: string };
    const stderr = anyErr.stderr?.toString().trim();
    throw new Error(stderr || `obbkit invocation failed: ${anyErr.message ?? err}`);
  }
}

function validateBoxes(name: string, boxes: BoxArray): number[][] {
  const out: number[][] = [];
  for (const row of boxes) {
    if (row.length !== 5) {
      throw new Error(`${name}: box array must be (n, 5), got a row of length ${row.length}`);
    }
    const vals = Array.from(row, Number);
    if (!vals.every(Number.isFinite)) {
      throw new Error(`${name}: non-finite values in box array`);
    }
    if (vals[2] <= 0 || vals[3] <= 0) {
      throw new Error(`${name}: box array has nonpositive w or h`);
    }
    out.push(vals);
  }
  return out;
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "obbkit-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/** Full rotated-IoU matrix between two box arrays, shape [a.length][b.length]. */
export function iouMatrix(a: BoxArray, b: BoxArray): number[][] {
  const av = validateBoxes("a", a);
  const bv = validateBoxes("b", b);
  return withTempDir((dir) => {
    const fa = join(dir, "a.json");
    const fb = join(dir, "b.json");
    writeFileSync(fa, JSON.stringify(av));
    writeFileSync(fb, JSON.stringify(bv));
    const out = runCli(["iou", "--a-file", fa, "--b-file", fb]);
    return (JSON.parse(out) as { iou: number[][] }).iou;
  });
}

/** Greedy rotated NMS; returns kept indices in score-descending keep order. */
export function nms(boxes: BoxArray, scores: ReadonlyArray<number>, iouThr = 0.8): number[] {
  const bv = validateBoxes("boxes", boxes);
  if (bv.length !== scores.length) {
    throw new Error(`length mismatch: ${bv.length} boxes vs ${scores.length} scores`);
  }
  const records = bv.map((row, i) => ({
    image_id: "_",
    category: "_",
    score: scores[i],
    cx: row[0],
    cy: row[1],
    w: row[2],
    h: row[3],
    theta: row[4],
  }));
  return withTempDir((dir) => {
    const f = join(dir, "dets.json");
    writeFileSync(f, JSON.stringify(records));
    const out = runCli(["nms", "--dets", f, `--iou-thr=${iouThr}`]);
    return (JSON.parse(out) as { keep: number[] }).keep;
  });
}

/** Per-class AP plus mAP of a detection file against an annotation directory. */
export function evaluate(
  detsPath: string,
  gtsPath: string,
  iouThr = 0.5,
  metric: "voc07" | "voc12" = "voc12",
): EvalReport {
  return withTempDir((dir) => {
    const report = join(dir, "eval.json");
    runCli([
      "eval",
      "--dets",
      detsPath,
      "--gts",
      gtsPath,
      `--iou-thr=${iouThr}`,
      "--metric",
      metric,
      "--json",
      report,
    ]);
    return JSON.parse(readFileSync(report, "utf8")) as EvalReport;
  });
}

/** Parse one annotation file into oriented-box records. */
export function parseAnnotations(path: string): AnnotationRecord[] {
  const out = runCli(["parse", "--gts", path]);
  return JSON.parse(out) as AnnotationRecord[];
}
