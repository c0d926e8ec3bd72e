/** Wire types for the session service's newline-JSON client API. */

export type CameraId = 'IN' | 'OUT';
export type LightState = 'GREEN' | 'YELLOW' | 'RED';
export type SessionStatus = 'ACTIVE' | 'PAUSED' | 'ENDED';

export type EventKind =
  | 'COMMIT'
  | 'UNATTENDED_COMMIT'
  | 'MANUAL_ADJUSTMENT'
  | 'WARNING'
  | 'SESSION_START'
  | 'SESSION_PAUSE'
  | 'SESSION_RESUME'
  | 'SESSION_END';

/** One append-only ledger event; carries a snapshot of the resulting totals. */
export interface LedgerEvent {
  sequence_no: number;
  timestamp_ms: number;
  kind: EventKind;
  camera: CameraId | null;
  delta: number;
  total_in: number;
  total_out: number;
  onscreen_in: number;
  onscreen_out: number;
  reason: string | null;
  actor: string | null;
}

export interface TraySnapshot {
  light: LightState;
  onscreen: number;
  ingested: number;
  dropped: number;
}

export interface Snapshot {
  session_id: string;
  status: SessionStatus;
  total_in: number;
  total_out: number;
  in_play: number;
  onscreen_in: number;
  onscreen_out: number;
  trays: Record<CameraId, TraySnapshot>;
  last_sequence_no: number;
  timestamp_ms: number;
  server_time_ms: number;
}

export interface ReconciliationReport {
  total_in: number;
  total_out: number;
  in_play: number;
  onscreen_in: number;
  onscreen_out: number;
  passed: boolean;
  discrepancies: string[];
  notes: string[];
}

/** Push-stream records, discriminated by `kind`. */
export type PushRecord =
  | { kind: 'event'; event: LedgerEvent }
  | { kind: 'light'; camera: CameraId; light: LightState; timestamp_ms: number }
  | ({ kind: 'snapshot' } & Snapshot)
  | ({ kind: 'reconciliation' } & ReconciliationReport)
  | { kind: 'overflow'; message: string };

export type AdjustmentTarget = 'TOTAL_IN' | 'TOTAL_OUT';

export interface AdjustmentRequest {
  target: AdjustmentTarget;
  delta: number;
  reason: string;
  actor?: string;
}
