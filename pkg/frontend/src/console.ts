/**
 * Terminal rendering of the operator view: a split screen with one bordered
 * panel per tray, the In Play readout front and center, an audit strip, and
 * the end-of-operation reconciliation screen. Pure string building, so the
 * layout is unit-testable without a terminal.
 */

import type { OperatorViewModel, TrayView } from './viewModel.js';
import type { ServiceClient } from './client.js';

const COLOR_CODES: Record<string, string> = {
  green: '\x1b[32m',
  yellow: '\x1b[33m',
  red: '\x1b[31m',
};
const RESET = '\x1b[0m';

const PANEL_WIDTH = 34;

function panelLines(tray: TrayView, color: boolean): string[] {
  const paint = (s: string) =>
    color ? `${COLOR_CODES[tray.border] ?? ''}${s}${RESET}` : s;
  const bar = paint('█'.repeat(PANEL_WIDTH));
  const body = (text: string) => {
    const inner = ` ${text}`.padEnd(PANEL_WIDTH - 2);
    return paint('█') + inner + paint('█');
  };
  return [
    bar,
    body(tray.label),
    body(`light: ${tray.light}`),
    body(`on screen: ${tray.onscreen}`),
    bar,
  ];
}

export function renderView(view: OperatorViewModel, color = false): string {
  const left = panelLines(view.trays.IN, color);
  const right = panelLines(view.trays.OUT, color);
  const lines: string[] = [];
  lines.push(
    `session ${view.sessionId ?? '—'}  status ${view.status}  connection ${view.connection}`,
  );
  lines.push('');
  for (let i = 0; i < left.length; i++) {
    lines.push(`${left[i]}   ${right[i]}`);
  }
  lines.push('');
  lines.push(`Total In: ${view.totalIn}   Total Out: ${view.totalOut}   >>> In Play: ${view.inPlay} <<<`);
  if (view.warnings.length > 0) {
    lines.push(`warnings (${view.warnings.length}): ${view.warnings[view.warnings.length - 1]}`);
  }
  if (view.audit.length > 0) {
    const last = view.audit[view.audit.length - 1]!;
    lines.push(
      `audit: ${view.audit.length} adjustment(s), last ${last.delta > 0 ? '+' : ''}${last.delta} ` +
        `by ${last.actor || 'unknown'} (${last.reason})`,
    );
  }
  for (const banner of view.banners.slice(-3)) {
    lines.push(`[${banner.level}] ${banner.text}`);
  }
  const verdict = view.reconciliationBanner();
  if (verdict !== null) {
    lines.push('');
    lines.push('=== RECONCILIATION ===');
    lines.push(`[${verdict.level}] ${verdict.text}`);
    for (const notice of view.reconciliationNotices()) {
      lines.push(`[${notice.level}] ${notice.text}`);
    }
    const r = view.reconciliation!;
    lines.push(`Total In ${r.total_in} / Total Out ${r.total_out} / In Play ${r.in_play}`);
  }
  return lines.join('\n');
}

export interface KeyActionResult {
  action: 'capture' | 'none';
  message?: string;
}

/**
 * Keyboard controls: "A" triggers an anomaly capture (the panel's hardware
 * key binding). Refused while disconnected rather than queued.
 */
export async function handleKey(
  key: string,
  view: OperatorViewModel,
  client: ServiceClient,
  note?: string,
): Promise<KeyActionResult> {
  if (key.toLowerCase() !== 'a') return { action: 'none' };
  if (view.connection === 'disconnected' || view.sessionId === null) {
    view.pushBanner('error', 'anomaly capture refused: not connected');
    return { action: 'capture', message: 'refused: not connected' };
  }
  try {
    const captureId = await client.captureAnomaly(view.sessionId, note);
    view.pushBanner('info', `anomaly capture saved: ${captureId}`);
    return { action: 'capture', message: captureId };
  } catch (err) {
    const text = err instanceof Error ? err.message : String(err);
    view.pushBanner('error', `anomaly capture failed: ${text}`);
    return { action: 'capture', message: `failed: ${text}` };
  }
}
