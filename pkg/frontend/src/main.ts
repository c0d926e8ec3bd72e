/**
 * Operator console entry point.
 *
 * Usage: ts-node --esm src/main.ts [host] [port] [session_id]
 *
 * Connects to a running session service, subscribes to the push stream, and
 * redraws the tray view on every record. Keys: "a" anomaly capture, "q" quit.
 * When no session_id is given a new session is started.
 */

import process from 'node:process';

import { ServiceClient } from './client.js';
import { handleKey, renderView } from './console.js';
import { OperatorViewModel } from './viewModel.js';

async function run(): Promise<void> {
  const host = process.argv[2] ?? '127.0.0.1';
  const port = Number(process.argv[3] ?? '9800');
  const client = new ServiceClient(host, port);
  await client.open();
  const sessionId = process.argv[4] ?? (await client.startSession());

  const view = new OperatorViewModel();
  const redraw = () => {
    process.stdout.write('\x1b[2J\x1b[H' + renderView(view, true) + '\n');
  };

  const unsubscribe = await client.subscribe(
    sessionId,
    (snap) => {
      view.applySnapshot(snap);
      redraw();
    },
    (record) => {
      view.apply(record);
      redraw();
    },
    () => {
      view.markDisconnected();
      redraw();
    },
  );

  process.stdin.setRawMode?.(true);
  process.stdin.resume();
  process.stdin.on('data', (chunk) => {
    const key = chunk.toString('utf-8');
    if (key === 'q' || key === '') {
      unsubscribe();
      client.close();
      process.exit(0);
    }
    void handleKey(key, view, client).then(redraw);
  });
  redraw();
}

run().catch((err) => {
  console.error('operator-ui:', err instanceof Error ? err.message : err);
  process.exit(1);
});
