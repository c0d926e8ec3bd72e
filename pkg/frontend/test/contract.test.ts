/**
 * Contract tests against a live session service, consumed only through its
 * public TCP interface. A zero-noise balanced scenario is simulated with the
 * backend CLI, fed through the service's ingestion sockets, and mirrored by
 * the view model from the recorded push stream; the final readouts must
 * match the service's own final snapshot.
 */

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import fs from 'node:fs';
import net from 'node:net';
import os from 'node:os';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ServiceClient, ServiceError } from '../src/client.js';
import { handleKey } from '../src/console.js';
import { OperatorViewModel } from '../src/viewModel.js';
import type { PushRecord } from '../src/types.js';

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), '..', '..');

const SCENARIO = [
  'duration_ms = 16000',
  'event 1000 HAND_ENTER IN',
  'event 1300 PLACE IN 3',
  'event 1700 HAND_EXIT IN',
  'event 5000 HAND_ENTER IN',
  'event 5300 REMOVE IN 3',
  'event 5700 HAND_EXIT IN',
  'event 9000 HAND_ENTER OUT',
  'event 9300 PLACE OUT 3',
  'event 9700 HAND_EXIT OUT',
  '',
].join('\n');

let tmpDir: string;
let port: number;
let server: ChildProcess;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitForPort(p: number, timeoutMs = 10000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const ok = await new Promise<boolean>((resolve) => {
      const sock = net.createConnection({ host: '127.0.0.1', port: p }, () => {
        sock.destroy();
        resolve(true);
      });
      sock.once('error', () => resolve(false));
    });
    if (ok) return;
    await sleep(100);
  }
  throw new Error(`service did not come up on port ${p}`);
}

/** Feed one camera's recorded stream file through an ingestion socket. */
async function feedStream(sessionId: string, camera: 'IN' | 'OUT', file: string): Promise<void> {
  const lines = fs
    .readFileSync(file, 'utf-8')
    .split('\n')
    .filter((l) => l.trim().length > 0 && !l.includes('"header"'));
  const socket = net.createConnection({ host: '127.0.0.1', port });
  const acks: Array<(reply: { ok: boolean }) => void> = [];
  let buffer = '';
  socket.on('data', (chunk) => {
    buffer += chunk.toString('utf-8');
    let nl;
    while ((nl = buffer.indexOf('\n')) >= 0) {
      const line = buffer.slice(0, nl);
      buffer = buffer.slice(nl + 1);
      if (line.trim()) acks.shift()?.(JSON.parse(line));
    }
  });
  const send = (line: string) =>
    new Promise<{ ok: boolean }>((resolve) => {
      acks.push(resolve);
      socket.write(line + '\n');
    });
  const hello = await send(`HELLO ${sessionId} ${camera}`);
  expect(hello.ok).toBe(true);
  for (const line of lines) {
    const ack = await send(line);
    expect(ack.ok).toBe(true);
  }
  socket.destroy();
}

beforeAll(async () => {
  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), 'operator-ui-'));
  fs.writeFileSync(path.join(tmpDir, 'scenario.txt'), SCENARIO);
  const sim = spawnSync(
    'python3',
    [
      '-m', 'gauzetrack.cli', 'simulate',
      '--script', path.join(tmpDir, 'scenario.txt'),
      '--seed', '1',
      '--out-dir', path.join(tmpDir, 'streams'),
    ],
    { cwd: REPO_ROOT, encoding: 'utf-8' },
  );
  expect(sim.status, sim.stderr).toBe(0);

  port = 20000 + Math.floor(Math.random() * 20000);
  server = spawn(
    'python3',
    [
      '-m', 'gauzetrack.cli', 'serve',
      '--port', String(port),
      '--data-dir', path.join(tmpDir, 'data'),
    ],
    { cwd: REPO_ROOT, stdio: 'ignore' },
  );
  await waitForPort(port);
}, 30000);

afterAll(() => {
  server?.kill('SIGTERM');
  fs.rmSync(tmpDir, { recursive: true, force: true });
});

describe('operator-ui against a live service', () => {
  it('mirrors the full session and matches the final snapshot', async () => {
    const client = new ServiceClient('127.0.0.1', port);
    await client.open();
    const sessionId = await client.startSession();

    const view = new OperatorViewModel();
    const records: PushRecord[] = [];
    const unsubscribe = await client.subscribe(
      sessionId,
      (snap) => view.applySnapshot(snap),
      (record) => records.push(record),
    );

    await feedStream(sessionId, 'IN', path.join(tmpDir, 'streams', 'in.ndjson'));
    await feedStream(sessionId, 'OUT', path.join(tmpDir, 'streams', 'out.ndjson'));

    // adjustment round trip: apply and revert, both audited
    const afterAdjust = await client.adjust(sessionId, {
      target: 'TOTAL_OUT',
      delta: 1,
      reason: 'recount at table',
      actor: 'nurse1',
    });
    expect(afterAdjust.total_out).toBe(4);
    await client.adjust(sessionId, {
      target: 'TOTAL_OUT',
      delta: -1,
      reason: 'recount confirmed original',
      actor: 'nurse1',
    });

    // client-side gate: an empty reason never reaches the service
    await expect(
      client.adjust(sessionId, { target: 'TOTAL_IN', delta: 1, reason: '  ' }),
    ).rejects.toThrow(ServiceError);

    // service-side rejection surfaces as an error, not a crash
    await expect(
      client.adjust(sessionId, { target: 'TOTAL_OUT', delta: -99, reason: 'bad idea' }),
    ).rejects.toMatchObject({ code: 'WouldGoNegative' });

    // anomaly capture via the "A" key binding
    const result = await handleKey('A', view, client, 'operator pressed A');
    expect(result.action).toBe('capture');
    expect(result.message).toMatch(/-cap\d{3}$/);
    const captureFile = path.join(
      tmpDir, 'data', 'sessions', sessionId, 'captures', `${result.message}.ndjson`,
    );
    expect(fs.existsSync(captureFile)).toBe(true);

    const report = await client.endSession(sessionId);
    expect(report.passed).toBe(true);

    // let the tail of the push stream (end events, reconciliation) arrive
    const deadline = Date.now() + 5000;
    while (Date.now() < deadline && !records.some((r) => r.kind === 'reconciliation')) {
      await sleep(50);
    }
    unsubscribe();
    for (const record of records) view.apply(record);

    // the projected view must equal the service's own final snapshot
    const finalSnap = await client.snapshot(sessionId);
    expect(view.totalIn).toBe(finalSnap.total_in);
    expect(view.totalOut).toBe(finalSnap.total_out);
    expect(view.inPlay).toBe(finalSnap.in_play);
    expect(view.trays.IN.onscreen).toBe(finalSnap.trays.IN.onscreen);
    expect(view.trays.OUT.onscreen).toBe(finalSnap.trays.OUT.onscreen);
    expect(view.trays.IN.light).toBe(finalSnap.trays.IN.light);
    expect(view.trays.OUT.light).toBe(finalSnap.trays.OUT.light);
    expect(view.lastSequenceNo).toBe(finalSnap.last_sequence_no);
    expect(view.status).toBe('ENDED');

    // zero-noise balanced scenario: 3 in, 3 out, nothing in play
    expect(view.totalIn).toBe(3);
    expect(view.totalOut).toBe(3);
    expect(view.inPlay).toBe(0);
    expect(view.trays.IN.border).toBe('green');
    expect(view.trays.OUT.border).toBe('green');
    expect(view.reconciliationBanner()).toEqual({
      level: 'info',
      text: 'All gauzes accounted for',
    });
    expect(view.audit.map((a) => a.reason)).toEqual([
      'recount at table',
      'recount confirmed original',
    ]);

    client.close();
  }, 60000);
});
