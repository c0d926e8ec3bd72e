/**
 * Newline-JSON TCP client for the session service.
 *
 * One connection per concern: commands are request/response on a shared
 * connection; `subscribe` dedicates a connection that the service upgrades
 * to a push stream.
 */

import net from 'node:net';

import type { AdjustmentRequest, PushRecord, ReconciliationReport, Snapshot } from './types.js';

export class ServiceError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ServiceError';
  }
}

type Reply = Record<string, unknown> & { ok?: boolean; error?: string; message?: string };

/** Splits a socket's byte stream into parsed JSON lines. */
function onJsonLines(socket: net.Socket, handle: (obj: Reply) => void): void {
  let buffer = '';
  socket.on('data', (chunk) => {
    buffer += chunk.toString('utf-8');
    let nl;
    while ((nl = buffer.indexOf('\n')) >= 0) {
      const line = buffer.slice(0, nl).trim();
      buffer = buffer.slice(nl + 1);
      if (line.length > 0) handle(JSON.parse(line) as Reply);
    }
  });
}

function connect(host: string, port: number): Promise<net.Socket> {
  return new Promise((resolve, reject) => {
    const socket = net.createConnection({ host, port }, () => {
      socket.off('error', reject);
      resolve(socket);
    });
    socket.once('error', reject);
  });
}

export class ServiceClient {
  private socket: net.Socket | null = null;
  private pending: Array<{ resolve: (r: Reply) => void; reject: (e: Error) => void }> = [];

  constructor(
    private readonly host: string,
    private readonly port: number,
  ) {}

  async open(): Promise<void> {
    const socket = await connect(this.host, this.port);
    onJsonLines(socket, (reply) => this.pending.shift()?.resolve(reply));
    socket.on('close', () => {
      for (const p of this.pending.splice(0)) p.reject(new Error('connection closed'));
    });
    this.socket = socket;
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }

  private async rpc(cmd: Record<string, unknown>): Promise<Reply> {
    const socket = this.socket;
    if (socket === null) throw new Error('client not connected');
    const reply = await new Promise<Reply>((resolve, reject) => {
      this.pending.push({ resolve, reject });
      socket.write(JSON.stringify(cmd) + '\n');
    });
    if (reply.ok === false) {
      throw new ServiceError(String(reply.error ?? 'Unknown'), String(reply.message ?? ''));
    }
    return reply;
  }

  async startSession(): Promise<string> {
    const reply = await this.rpc({ cmd: 'start' });
    return reply.session_id as string;
  }

  async snapshot(sessionId: string): Promise<Snapshot> {
    const reply = await this.rpc({ cmd: 'snapshot', session_id: sessionId });
    return reply.snapshot as Snapshot;
  }

  /** Manual count correction; the service enforces a non-empty reason too. */
  async adjust(sessionId: string, adj: AdjustmentRequest): Promise<Snapshot> {
    if (adj.reason.trim().length === 0) {
      throw new ServiceError('InvalidAdjustment', 'reason must be non-empty');
    }
    const reply = await this.rpc({ cmd: 'adjust', session_id: sessionId, ...adj });
    return reply.snapshot as Snapshot;
  }

  async captureAnomaly(sessionId: string, note?: string): Promise<string> {
    const reply = await this.rpc({ cmd: 'capture', session_id: sessionId, note });
    return reply.capture_id as string;
  }

  async pause(sessionId: string): Promise<Snapshot> {
    return (await this.rpc({ cmd: 'pause', session_id: sessionId })).snapshot as Snapshot;
  }

  async resume(sessionId: string): Promise<Snapshot> {
    return (await this.rpc({ cmd: 'resume', session_id: sessionId })).snapshot as Snapshot;
  }

  async endSession(sessionId: string): Promise<ReconciliationReport> {
    const reply = await this.rpc({ cmd: 'end', session_id: sessionId });
    return reply.report as ReconciliationReport;
  }

  /**
   * Open a dedicated push-stream connection. The first reply is the resync
   * snapshot; every following line is a PushRecord. Resolves to a closer.
   */
  async subscribe(
    sessionId: string,
    onSnapshot: (snap: Snapshot) => void,
    onRecord: (record: PushRecord) => void,
    onClose?: () => void,
  ): Promise<() => void> {
    const socket = await connect(this.host, this.port);
    let gotFirst = false;
    await new Promise<void>((resolve, reject) => {
      onJsonLines(socket, (obj) => {
        if (!gotFirst) {
          gotFirst = true;
          if (obj.ok === false) {
            reject(new ServiceError(String(obj.error), String(obj.message ?? '')));
            return;
          }
          onSnapshot(obj.snapshot as Snapshot);
          resolve();
          return;
        }
        onRecord(obj as unknown as PushRecord);
      });
      socket.once('error', reject);
      socket.on('close', () => onClose?.());
      socket.write(JSON.stringify({ cmd: 'subscribe', session_id: sessionId }) + '\n');
    });
    return () => socket.destroy();
  }
}
