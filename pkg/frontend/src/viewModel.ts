/**
 * Server-authoritative operator view model.
 *
 * The client never computes a count: every displayed number is copied from a
 * service snapshot or a pushed ledger event, applied in arrival order. The
 * view model is a pure projection of that stream, so replaying a recorded
 * stream reproduces the screen exactly.
 */

import type {
  CameraId,
  LedgerEvent,
  LightState,
  PushRecord,
  ReconciliationReport,
  SessionStatus,
  Snapshot,
} from './types.js';

export type BorderColor = 'green' | 'yellow' | 'red';
export type ConnectionState = 'connected' | 'disconnected' | 'stale';

/** Border color is a pure function of the last received light state. */
export function borderColor(light: LightState): BorderColor {
  switch (light) {
    case 'GREEN':
      return 'green';
    case 'YELLOW':
      return 'yellow';
    case 'RED':
      return 'red';
  }
}

export interface TrayView {
  label: string;
  light: LightState;
  border: BorderColor;
  onscreen: number;
}

export interface AuditEntry {
  sequenceNo: number;
  timestampMs: number;
  delta: number;
  reason: string;
  actor: string;
}

export interface Banner {
  level: 'info' | 'warning' | 'error';
  text: string;
}

export class OperatorViewModel {
  sessionId: string | null = null;
  status: SessionStatus = 'ACTIVE';
  totalIn = 0;
  totalOut = 0;
  inPlay = 0;
  trays: Record<CameraId, TrayView> = {
    IN: { label: 'In tray', light: 'GREEN', border: 'green', onscreen: 0 },
    OUT: { label: 'Out tray', light: 'GREEN', border: 'green', onscreen: 0 },
  };
  connection: ConnectionState = 'connected';
  lastSequenceNo = 0;
  audit: AuditEntry[] = [];
  warnings: string[] = [];
  reconciliation: ReconciliationReport | null = null;
  banners: Banner[] = [];

  /** Resynchronize from a full snapshot (initial subscribe or reconnect). */
  applySnapshot(snap: Snapshot): void {
    this.sessionId = snap.session_id;
    this.status = snap.status;
    this.totalIn = snap.total_in;
    this.totalOut = snap.total_out;
    this.inPlay = snap.in_play;
    for (const cam of ['IN', 'OUT'] as CameraId[]) {
      const tray = snap.trays[cam];
      this.trays[cam].light = tray.light;
      this.trays[cam].border = borderColor(tray.light);
      this.trays[cam].onscreen = tray.onscreen;
    }
    this.lastSequenceNo = snap.last_sequence_no;
    this.connection = 'connected';
  }

  /** Apply one push-stream record, in arrival order. */
  apply(record: PushRecord): void {
    switch (record.kind) {
      case 'snapshot':
        this.applySnapshot(record);
        return;
      case 'light': {
        const tray = this.trays[record.camera];
        tray.light = record.light;
        tray.border = borderColor(record.light);
        return;
      }
      case 'event':
        this.applyEvent(record.event);
        return;
      case 'reconciliation':
        this.reconciliation = record;
        this.status = 'ENDED';
        return;
      case 'overflow':
        // the service dropped records for us: readouts can no longer be
        // trusted until the next snapshot resync
        this.connection = 'stale';
        this.pushBanner('error', `push stream overflowed: ${record.message}`);
        return;
    }
  }

  private applyEvent(event: LedgerEvent): void {
    if (event.sequence_no <= this.lastSequenceNo) {
      return; // already reflected by a snapshot resync
    }
    this.lastSequenceNo = event.sequence_no;
    this.totalIn = event.total_in;
    this.totalOut = event.total_out;
    this.inPlay = event.total_in - event.total_out;
    this.trays.IN.onscreen = event.onscreen_in;
    this.trays.OUT.onscreen = event.onscreen_out;
    switch (event.kind) {
      case 'MANUAL_ADJUSTMENT':
        this.audit.push({
          sequenceNo: event.sequence_no,
          timestampMs: event.timestamp_ms,
          delta: event.delta,
          reason: event.reason ?? '',
          actor: event.actor ?? '',
        });
        break;
      case 'WARNING':
        this.warnings.push(event.reason ?? 'unspecified warning');
        break;
      case 'SESSION_PAUSE':
        this.status = 'PAUSED';
        break;
      case 'SESSION_RESUME':
        this.status = 'ACTIVE';
        break;
      case 'SESSION_END':
        this.status = 'ENDED';
        break;
    }
  }

  /** Connection loss: freeze counts and mark them visibly stale. */
  markDisconnected(): void {
    this.connection = 'disconnected';
    this.pushBanner('error', 'connection lost — counts frozen and may be stale');
  }

  pushBanner(level: Banner['level'], text: string): void {
    this.banners.push({ level, text });
  }

  /** End-of-operation banner; null while the session is still running. */
  reconciliationBanner(): Banner | null {
    const report = this.reconciliation;
    if (report === null) return null;
    if (report.passed) {
      return { level: 'info', text: 'All gauzes accounted for' };
    }
    return { level: 'error', text: report.discrepancies.join('; ') };
  }

  /** Amber notices (e.g. unused gauzes left on the In tray). */
  reconciliationNotices(): Banner[] {
    return (this.reconciliation?.notes ?? []).map((text) => ({
      level: 'warning' as const,
      text,
    }));
  }
}

/** Client-side gate for the adjustment form: a reason is mandatory. */
export function canSubmitAdjustment(delta: number, reason: string): boolean {
  return delta !== 0 && reason.trim().length > 0;
}
