/**
 * Node bindings for the leakguard CLI.
 *
 * Every function shells out to the command-line tool and passes its JSON
 * report body through verbatim: the `json` field of a result holds the
 * exact bytes the tool wrote, so serialized binding results are identical
 * to CLI artifacts. No detection, calibration, or metric logic lives here.
 */

import { execFile } from 'node:child_process';
import { mkdtemp, readFile, rm, access } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import path from 'node:path';
import { promisify } from 'node:util';

const execFileAsync = promisify(execFile);

export type LeakMode = 'exact' | 'near' | 'union';
export type TieRule = 'model_fallback' | 'predict_malicious' | 'predict_benign';
export type Baseline = 'exact_memorizer' | 'knn' | 'centroid';

export interface DatasetHandle {
  /** Metadata JSONL path. */
  metadata: string;
  /** Representation file; resolved next to the metadata when omitted. */
  representation?: string;
}

export interface ConfusionCountsJson {
  tp: number;
  fn: number;
  tn: number;
  fp: number;
}

/** The eight derived metrics; null marks an undefined (0/0) value. */
export interface MetricsJson {
  fnr: number | null;
  fpr: number | null;
  precision: number | null;
  recall: number | null;
  f1: number | null;
  sensitivity: number | null;
  specificity: number | null;
  ba: number | null;
  counts: ConfusionCountsJson;
}

export interface PartitionedJson {
  leak_ratio: number;
  complete: MetricsJson;
  leak: MetricsJson;
  nonleak: MetricsJson;
}

export interface LeakMatchJson {
  test_id: string;
  train_ids: string[];
  best_similarity: number;
}

export interface LeakageReportJson {
  kind: LeakMode;
  threshold: number | null;
  test_size: number;
  ratio: number;
  matches: LeakMatchJson[];
}

export interface CalibrationJson {
  chosen_m: number;
  max_iou: number;
  curve: { m: number; iou: number }[];
}

export interface LeakAwareJson {
  standalone: PartitionedJson;
  leak_aware: PartitionedJson;
  provenance: { memorized: number; model: number };
}

export interface ManifestJson {
  command_line: string;
  config_digest: string;
  input_digests: Record<string, string>;
  tool_version: string;
  seed: number | null;
  timestamp: string;
}

/** A CLI artifact: parsed body, its verbatim bytes, and the run manifest. */
export interface Artifact<T> {
  report: T;
  json: string;
  manifest: ManifestJson;
}

export type ErrorKind = 'usage' | 'data' | 'internal';

export class LeakguardCliError extends Error {
  constructor(
    message: string,
    readonly exitCode: number,
    readonly kind: ErrorKind,
  ) {
    super(message);
    this.name = 'LeakguardCliError';
  }
}

export interface InvokeOptions {
  /** Command that runs the tool; defaults to $LEAKGUARD_CLI or `leakguard`. */
  command?: string[];
}

function cliCommand(options?: InvokeOptions): string[] {
  if (options?.command?.length) return options.command;
  const fromEnv = process.env.LEAKGUARD_CLI;
  if (fromEnv) return fromEnv.split(' ').filter(Boolean);
  return ['leakguard'];
}

function errorKind(exitCode: number): ErrorKind {
  if (exitCode === 1) return 'usage';
  if (exitCode === 2) return 'data';
  return 'internal';
}

export async function runCli(args: string[], options?: InvokeOptions): Promise<string> {
  const [program, ...prefix] = cliCommand(options);
  try {
    const { stdout } = await execFileAsync(program, [...prefix, ...args], {
      maxBuffer: 64 * 1024 * 1024,
    });
    return stdout;
  } catch (error) {
    const failure = error as { code?: number; stderr?: string; message?: string };
    const exitCode = typeof failure.code === 'number' ? failure.code : 3;
    const stderr = (failure.stderr ?? failure.message ?? '').trim();
    throw new LeakguardCliError(stderr || `leakguard exited with ${exitCode}`,
      exitCode, errorKind(exitCode));
  }
}

async function withArtifact<T>(
  build: (outPath: string) => string[],
  options?: InvokeOptions,
): Promise<Artifact<T>> {
  const dir = await mkdtemp(path.join(tmpdir(), 'leakguard-'));
  const outPath = path.join(dir, 'out.json');
  try {
    await runCli(build(outPath), options);
    const json = await readFile(outPath, 'utf8');
    const manifest = JSON.parse(
      await readFile(`${outPath}.manifest.json`, 'utf8'),
    ) as ManifestJson;
    return { report: JSON.parse(json) as T, json, manifest };
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

function datasetArgs(flag: string, handle: DatasetHandle): string[] {
  const args = [`--${flag}`, handle.metadata];
  if (handle.representation) args.push(`--${flag}-rep`, handle.representation);
  return args;
}

/**
 * Wrap dataset files in a handle. The files must exist; full validation
 * happens in the tool on first use, with errors surfaced as
 * LeakguardCliError of kind "data".
 */
export async function loadDataset(
  metadata: string,
  representation?: string,
): Promise<DatasetHandle> {
  await access(metadata);
  if (representation) await access(representation);
  return { metadata, representation };
}

export interface AuditOptions extends InvokeOptions {
  mode?: LeakMode;
  threshold?: number;
  workers?: number;
}

export async function audit(
  train: DatasetHandle,
  test: DatasetHandle,
  options?: AuditOptions,
): Promise<Artifact<LeakageReportJson>> {
  return withArtifact((out) => {
    const args = ['audit', ...datasetArgs('train', train), ...datasetArgs('test', test)];
    args.push('--mode', options?.mode ?? 'exact');
    if (options?.threshold !== undefined) args.push('--threshold', String(options.threshold));
    if (options?.workers !== undefined) args.push('--workers', String(options.workers));
    args.push('--out', out);
    return args;
  }, options);
}

export interface CalibrateOptions extends InvokeOptions {
  range?: [number, number];
  step?: number;
  workers?: number;
}

export async function calibrate(
  train: DatasetHandle,
  test: DatasetHandle,
  leakFvPath: string,
  options?: CalibrateOptions,
): Promise<Artifact<CalibrationJson>> {
  return withArtifact((out) => {
    const args = ['calibrate', ...datasetArgs('train', train), ...datasetArgs('test', test)];
    args.push('--leak-fv', leakFvPath);
    if (options?.range) args.push('--range', `${options.range[0]}:${options.range[1]}`);
    if (options?.step !== undefined) args.push('--step', String(options.step));
    if (options?.workers !== undefined) args.push('--workers', String(options.workers));
    args.push('--out', out);
    return args;
  }, options);
}

export interface EvaluateOptions extends InvokeOptions {
  test?: DatasetHandle;
  train?: DatasetHandle;
  predictions?: string;
  baseline?: Baseline;
  k?: number;
  leakReport?: string;
  mode?: LeakMode;
  threshold?: number;
  counts?: ConfusionCountsJson;
}

export async function evaluate(
  options: EvaluateOptions,
): Promise<Artifact<PartitionedJson | MetricsJson>> {
  return withArtifact((out) => {
    const args = ['evaluate'];
    if (options.counts) {
      const { tp, fn, tn, fp } = options.counts;
      args.push('--counts', `${tp},${fn},${tn},${fp}`);
      args.push('--out', out);
      return args;
    }
    if (options.test) args.push(...datasetArgs('test', options.test));
    if (options.train) args.push(...datasetArgs('train', options.train));
    if (options.predictions) args.push('--predictions', options.predictions);
    if (options.baseline) args.push('--baseline', options.baseline);
    if (options.k !== undefined) args.push('--k', String(options.k));
    if (options.leakReport) args.push('--leak-report', options.leakReport);
    if (options.mode) args.push('--mode', options.mode);
    if (options.threshold !== undefined) args.push('--threshold', String(options.threshold));
    args.push('--out', out);
    return args;
  }, options);
}

/** Metrics from explicit confusion counts; undefined values map to null. */
export async function metricsFromCounts(
  counts: ConfusionCountsJson,
  options?: InvokeOptions,
): Promise<Artifact<MetricsJson>> {
  return evaluate({ counts, ...options }) as Promise<Artifact<MetricsJson>>;
}

export interface LeakAwareOptions extends InvokeOptions {
  predictions?: string;
  baseline?: Baseline;
  k?: number;
  mode?: LeakMode;
  threshold?: number;
  tieRule?: TieRule;
}

export async function leakAware(
  train: DatasetHandle,
  test: DatasetHandle,
  options?: LeakAwareOptions,
): Promise<Artifact<LeakAwareJson>> {
  return withArtifact((out) => {
    const args = ['leak-aware', ...datasetArgs('train', train), ...datasetArgs('test', test)];
    if (options?.predictions) args.push('--predictions', options.predictions);
    if (options?.baseline) args.push('--baseline', options.baseline);
    if (options?.k !== undefined) args.push('--k', String(options.k));
    if (options?.mode) args.push('--mode', options.mode);
    if (options?.threshold !== undefined) args.push('--threshold', String(options.threshold));
    if (options?.tieRule) args.push('--tie-rule', options.tieRule);
    args.push('--out', out);
    return args;
  }, options);
}

export interface SynthOptions extends InvokeOptions {
  outDir: string;
  seed?: number;
  periods?: number;
  perPeriod?: number;
  malwareRatio?: number;
  leakRate?: number;
  jitter?: number;
  drift?: number;
  flipProb?: number;
  dupWindow?: number;
  representation?: 'binary' | 'embedding';
  dim?: number;
  layout?: 'split' | 'stream';
  testPeriods?: number;
  flipFixture?: boolean;
}

export interface SynthSummaryJson {
  layout: string;
  seed: number;
  files: Record<string, unknown>;
  generator: { name: string; version: number };
}

export async function synth(options: SynthOptions): Promise<Artifact<SynthSummaryJson>> {
  const args = ['synth', '--out-dir', options.outDir];
  const push = (flag: string, value: unknown) => {
    if (value !== undefined) args.push(flag, String(value));
  };
  push('--seed', options.seed);
  push('--periods', options.periods);
  push('--per-period', options.perPeriod);
  push('--malware-ratio', options.malwareRatio);
  push('--leak-rate', options.leakRate);
  push('--jitter', options.jitter);
  push('--drift', options.drift);
  push('--flip-prob', options.flipProb);
  push('--dup-window', options.dupWindow);
  push('--representation', options.representation);
  push('--dim', options.dim);
  push('--layout', options.layout);
  push('--test-periods', options.testPeriods);
  if (options.flipFixture) args.push('--flip-fixture');
  await runCli(args, options);
  const summaryPath = path.join(options.outDir, 'synth.json');
  const json = await readFile(summaryPath, 'utf8');
  const manifest = JSON.parse(
    await readFile(`${summaryPath}.manifest.json`, 'utf8'),
  ) as ManifestJson;
  return { report: JSON.parse(json) as SynthSummaryJson, json, manifest };
}
