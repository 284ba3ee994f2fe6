import { execFile } from 'node:child_process';
import { mkdtemp, readFile, rm, writeFile } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import path from 'node:path';
import { promisify } from 'node:util';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import {
  audit,
  calibrate,
  evaluate,
  leakAware,
  LeakguardCliError,
  loadDataset,
  metricsFromCounts,
  runCli,
  synth,
  type DatasetHandle,
  type LeakageReportJson,
  type MetricsJson,
  type PartitionedJson,
} from '../src/index.js';

const execFileAsync = promisify(execFile);

let work: string;
let flipDir: string;
let embDir: string;
let tiny: { train: DatasetHandle; test: DatasetHandle };
let emptyTest: DatasetHandle;
let exactReportPath: string;

/** Run the CLI directly (no bindings) and return the artifact bytes. */
async function directCli(args: string[], outPath: string): Promise<string> {
  await execFileAsync('leakguard', [...args, '--out', outPath], {
    maxBuffer: 64 * 1024 * 1024,
  });
  return readFile(outPath, 'utf8');
}

beforeAll(async () => {
  work = await mkdtemp(path.join(tmpdir(), 'leakguard-bindings-'));

  // the 2x2 fixture: train {A:[1,3], B:[2]}, test {X:[1,3], Y:[4]}, dim 5
  const trainMeta = path.join(work, 't.jsonl');
  const testMeta = path.join(work, 's.jsonl');
  await writeFile(trainMeta, [
    '{"id": "A", "label": "benign", "timestamp": "2020-01"}',
    '{"id": "B", "label": "benign", "timestamp": "2020-01"}',
    '',
  ].join('\n'));
  await writeFile(path.join(work, 't.rep.jsonl'), [
    '{"dim": 5}',
    '{"id": "A", "indices": [1, 3]}',
    '{"id": "B", "indices": [2]}',
    '',
  ].join('\n'));
  await writeFile(testMeta, [
    '{"id": "X", "label": "malicious", "timestamp": "2020-02"}',
    '{"id": "Y", "label": "benign", "timestamp": "2020-02"}',
    '',
  ].join('\n'));
  await writeFile(path.join(work, 's.rep.jsonl'), [
    '{"dim": 5}',
    '{"id": "X", "indices": [1, 3]}',
    '{"id": "Y", "indices": [4]}',
    '',
  ].join('\n'));
  tiny = {
    train: await loadDataset(trainMeta),
    test: await loadDataset(testMeta),
  };

  const emptyMeta = path.join(work, 'empty.jsonl');
  await writeFile(emptyMeta, '');
  await writeFile(path.join(work, 'empty.rep.jsonl'), '{"dim": 5}\n');
  emptyTest = await loadDataset(emptyMeta);

  flipDir = path.join(work, 'flip');
  await synth({ outDir: flipDir, seed: 0, flipFixture: true });

  embDir = path.join(work, 'emb');
  await synth({
    outDir: embDir,
    seed: 11,
    periods: 4,
    perPeriod: 400,
    malwareRatio: 0.2,
    leakRate: 0.35,
    jitter: 0.05,
    representation: 'embedding',
  });
  exactReportPath = path.join(work, 'emb-exact.json');
  await directCli([
    'audit',
    '--train', path.join(embDir, 'train.jsonl'),
    '--test', path.join(embDir, 'test.jsonl'),
    '--mode', 'exact',
  ], exactReportPath);
}, 120_000);

afterAll(async () => {
  await rm(work, { recursive: true, force: true });
});

describe('audit', () => {
  it('reports ratio 0.5 on the 2x2 fixture, identical to the CLI', async () => {
    const bound = await audit(tiny.train, tiny.test, { mode: 'exact' });
    expect(bound.report.ratio).toBe(0.5);
    expect(bound.report.matches).toEqual([
      { test_id: 'X', train_ids: ['A'], best_similarity: 1.0 },
    ]);
    const direct = await directCli([
      'audit', '--train', tiny.train.metadata, '--test', tiny.test.metadata,
      '--mode', 'exact',
    ], path.join(work, 'direct-audit.json'));
    expect(bound.json).toBe(direct);
  });

  it('reports ratio 0 on an empty test set', async () => {
    const bound = await audit(tiny.train, emptyTest, { mode: 'exact' });
    expect(bound.report.ratio).toBe(0);
    expect(bound.report.test_size).toBe(0);
  });

  it('rejects an invalid mode with a usage error', async () => {
    await expect(
      audit(tiny.train, tiny.test, { mode: 'sideways' as never }),
    ).rejects.toMatchObject({ exitCode: 1, kind: 'usage' });
  });

  it('maps missing inputs to a data error with the message preserved', async () => {
    const ghost = { metadata: path.join(work, 'missing.jsonl') };
    await expect(audit(ghost, tiny.test)).rejects.toBeInstanceOf(LeakguardCliError);
    await expect(audit(ghost, tiny.test)).rejects.toMatchObject({
      exitCode: 2,
      kind: 'data',
    });
  });
});

describe('CLI equivalence across the audit/calibrate/evaluate/leak-aware surface', () => {
  interface Fixture {
    name: string;
    bound: () => Promise<{ json: string }>;
    args: () => string[];
  }

  const fixtures: Fixture[] = [
    {
      name: 'exact audit on the flip fixture',
      bound: () => audit(handle(flipDir, 'train'), handle(flipDir, 'test')),
      args: () => ['audit', '--train', meta(flipDir, 'train'),
        '--test', meta(flipDir, 'test'), '--mode', 'exact'],
    },
    {
      name: 'near audit at 0.97',
      bound: () => audit(handle(embDir, 'train'), handle(embDir, 'test'),
        { mode: 'near', threshold: 0.97 }),
      args: () => ['audit', '--train', meta(embDir, 'train'),
        '--test', meta(embDir, 'test'), '--mode', 'near', '--threshold', '0.97'],
    },
    {
      name: 'union audit at 0.97',
      bound: () => audit(handle(embDir, 'train'), handle(embDir, 'test'),
        { mode: 'union', threshold: 0.97 }),
      args: () => ['audit', '--train', meta(embDir, 'train'),
        '--test', meta(embDir, 'test'), '--mode', 'union', '--threshold', '0.97'],
    },
    {
      name: 'threshold calibration against the exact leak set',
      bound: () => calibrate(handle(embDir, 'train'), handle(embDir, 'test'),
        exactReportPath, { range: [0.8, 1.0], step: 0.01 }),
      args: () => ['calibrate', '--train', meta(embDir, 'train'),
        '--test', meta(embDir, 'test'), '--leak-fv', exactReportPath,
        '--range', '0.8:1.0', '--step', '0.01'],
    },
    {
      name: 'metrics from counts',
      bound: () => metricsFromCounts({ tp: 9, fn: 1, tn: 95, fp: 5 }),
      args: () => ['evaluate', '--counts', '9,1,95,5'],
    },
    {
      name: 'metrics from degenerate counts',
      bound: () => metricsFromCounts({ tp: 0, fn: 0, tn: 10, fp: 0 }),
      args: () => ['evaluate', '--counts', '0,0,10,0'],
    },
    {
      name: 'partitioned evaluation with predictions and a leak report',
      bound: async () => {
        const report = await audit(handle(flipDir, 'train'), handle(flipDir, 'test'));
        const reportPath = path.join(work, 'flip-exact.json');
        await writeFile(reportPath, report.json);
        return evaluate({
          test: handle(flipDir, 'test'),
          predictions: path.join(flipDir, 'predictions_gen.jsonl'),
          leakReport: reportPath,
        });
      },
      args: () => ['evaluate', '--test', meta(flipDir, 'test'),
        '--predictions', path.join(flipDir, 'predictions_gen.jsonl'),
        '--leak-report', path.join(work, 'flip-exact.json')],
    },
    {
      name: 'partitioned evaluation with the memorizer baseline',
      bound: () => evaluate({
        test: handle(flipDir, 'test'),
        train: handle(flipDir, 'train'),
        baseline: 'exact_memorizer',
        mode: 'exact',
      }),
      args: () => ['evaluate', '--test', meta(flipDir, 'test'),
        '--train', meta(flipDir, 'train'), '--baseline', 'exact_memorizer',
        '--mode', 'exact'],
    },
    {
      name: 'leak-aware comparison with model predictions',
      bound: () => leakAware(handle(flipDir, 'train'), handle(flipDir, 'test'),
        { predictions: path.join(flipDir, 'predictions_gen.jsonl') }),
      args: () => ['leak-aware', '--train', meta(flipDir, 'train'),
        '--test', meta(flipDir, 'test'),
        '--predictions', path.join(flipDir, 'predictions_gen.jsonl')],
    },
    {
      name: 'leak-aware comparison with a baseline and tie rule',
      bound: () => leakAware(handle(flipDir, 'train'), handle(flipDir, 'test'),
        { baseline: 'exact_memorizer', tieRule: 'predict_malicious' }),
      args: () => ['leak-aware', '--train', meta(flipDir, 'train'),
        '--test', meta(flipDir, 'test'), '--baseline', 'exact_memorizer',
        '--tie-rule', 'predict_malicious'],
    },
  ];

  function meta(dir: string, stem: string): string {
    return path.join(dir, `${stem}.jsonl`);
  }

  function handle(dir: string, stem: string): DatasetHandle {
    return { metadata: meta(dir, stem) };
  }

  it.each(fixtures.map((f) => [f.name, f] as const))(
    '%s is byte-identical to the CLI body',
    async (_name, fixture) => {
      const bound = await fixture.bound();
      const direct = await directCli(
        fixture.args(),
        path.join(work, `direct-${fixtures.indexOf(fixture)}.json`),
      );
      expect(Buffer.from(bound.json, 'utf8').equals(Buffer.from(direct, 'utf8')))
        .toBe(true);
    },
    60_000,
  );
});

describe('metrics mapping', () => {
  it('matches the worked example', async () => {
    const { report } = await metricsFromCounts({ tp: 9, fn: 1, tn: 95, fp: 5 });
    expect(report.ba).toBeCloseTo(0.925, 12);
    expect(report.precision).toBeCloseTo(9 / 14, 12);
  });

  it('perfect counts give all ones', async () => {
    const { report } = await metricsFromCounts({ tp: 5, fn: 0, tn: 5, fp: 0 });
    expect(report.f1).toBe(1);
    expect(report.ba).toBe(1);
  });

  it('an empty positive class maps undefined metrics to null', async () => {
    const { report } = await metricsFromCounts({ tp: 0, fn: 0, tn: 10, fp: 0 });
    expect(report.fnr).toBeNull();
    expect(report.ba).toBeNull();
    expect(report.specificity).toBe(1);
  });
});

describe('structured results', () => {
  it('exposes the manifest alongside the body', async () => {
    const bound = await audit(tiny.train, tiny.test);
    expect(bound.manifest.tool_version).toBeTruthy();
    expect(Object.keys(bound.manifest.input_digests).length).toBeGreaterThan(0);
    expect(bound.manifest.timestamp).toBeTruthy();
  });

  it('parses partitioned reports into typed shapes', async () => {
    const bound = await evaluate({
      test: handleOf(flipDir, 'test'),
      train: handleOf(flipDir, 'train'),
      baseline: 'exact_memorizer',
    }) as { report: PartitionedJson };
    expect(bound.report.leak_ratio).toBeGreaterThan(0.5);
    expect(bound.report.complete.counts.tp).toBeGreaterThan(0);
  });

  it('leak-aware reports include provenance counts', async () => {
    const bound = await leakAware(handleOf(flipDir, 'train'), handleOf(flipDir, 'test'), {
      predictions: path.join(flipDir, 'predictions_gen.jsonl'),
    });
    expect(bound.report.provenance.memorized).toBeGreaterThan(0);
    expect(bound.report.leak_aware.complete.ba ?? 0)
      .toBeGreaterThanOrEqual(bound.report.standalone.complete.ba ?? 1);
  });

  function handleOf(dir: string, stem: string): DatasetHandle {
    return { metadata: path.join(dir, `${stem}.jsonl`) };
  }
});

describe('runCli passthrough', () => {
  it('surfaces stdout', async () => {
    const out = await runCli(['--version']);
    expect(out).toContain('leakguard');
  });
});
