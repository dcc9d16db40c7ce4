// Cycle driver: acks each frame, mirrors the field, verifies footer CRCs
// and slips at most one queued command into each footer slot. Transport is
// injected so tests can drive the session without a socket.

import * as pr from "./protocol.js";
import { FieldMirror } from "./mirror.js";

export interface ByteLink {
  send(data: Uint8Array): void;
  close(): void;
}

export interface CycleStats {
  tick: number;
  mode: number;
  band: number;
  sensorRecords: number;
  particleRecords: number;
  headerParticleCount: number;
  bytesCycle: number;
}

export interface SessionHooks {
  onCycle?: (stats: CycleStats, mirror: FieldMirror) => void;
  onError?: (err: Error) => void;
}

export class StreamSession {
  readonly mirror = new FieldMirror();
  readonly cycles: CycleStats[] = [];

  private decoder = new pr.StreamDecoder();
  private link: ByteLink | null = null;
  private sensorsPayload: Uint8Array | null = null;
  private particlesPayload: Uint8Array | null = null;
  private sensorRecords = 0;
  private particleRecords = 0;
  private bytesCycle = 0;
  private pendingViewpoint: pr.Command | null = null;
  private pendingOther: pr.Command[] = [];

  constructor(private hooks: SessionHooks = {}) {}

  attach(link: ByteLink): void {
    this.link = link;
    this.decoder = new pr.StreamDecoder();
    this.sensorsPayload = null;
    this.particlesPayload = null;
    this.bytesCycle = 0;
  }

  // a newer viewpoint always replaces an unsent one: orbiting must not
  // queue a backlog of stale camera positions
  setViewpoint(xCm: number, yCm: number, zCm: number): void {
    this.pendingViewpoint = {
      kind: pr.CMD_SET_VIEWPOINT,
      viewpointCm: [xCm, yCm, zCm],
    };
  }

  setMode(mode: number): void {
    this.pendingOther.push({ kind: pr.CMD_SET_MODE, mode });
  }

  requestFull(): void {
    this.pendingOther.push({ kind: pr.CMD_REQUEST_FULL });
  }

  feed(data: Uint8Array): void {
    let frames: pr.Frame[];
    try {
      frames = this.decoder.feed(data);
    } catch (err) {
      this.fail(err);
      return;
    }
    this.bytesCycle += data.length;
    for (const frame of frames) {
      try {
        this.handle(frame);
      } catch (err) {
        this.fail(err);
        return;
      }
    }
  }

  private fail(err: unknown): void {
    const e = err instanceof Error ? err : new Error(String(err));
    if (this.hooks.onError) {
      this.hooks.onError(e);
    } else {
      throw e;
    }
    this.link?.close();
  }

  private send(data: Uint8Array): void {
    this.link?.send(data);
  }

  private ack(frameType: number): void {
    this.send(pr.encodeFrame(pr.FT_ACK, pr.encodeAck(frameType)));
  }

  private handle(frame: pr.Frame): void {
    switch (frame.frameType) {
      case pr.FT_HEADER:
        this.mirror.applyHeader(pr.parseHeader(frame.payload));
        this.sensorsPayload = null;
        this.particlesPayload = null;
        this.ack(pr.FT_HEADER);
        break;
      case pr.FT_SENSORS:
        this.sensorsPayload = frame.payload;
        this.sensorRecords = this.mirror.applySensors(frame.payload);
        this.ack(pr.FT_SENSORS);
        break;
      case pr.FT_PARTICLES:
        this.particlesPayload = frame.payload;
        this.particleRecords = this.mirror.applyParticles(frame.payload);
        this.ack(pr.FT_PARTICLES);
        break;
      case pr.FT_FOOTER:
        this.finish(pr.parseFooter(frame.payload));
        break;
      default:
        throw new pr.ProtocolViolationError(
          `unexpected frame type ${frame.frameType} from server`);
    }
  }

  private finish(footer: pr.Footer): void {
    if (this.sensorsPayload === null || this.particlesPayload === null) {
      throw new pr.ProtocolViolationError("FOOTER before both payload frames");
    }
    const crc = pr.payloadCrc(this.sensorsPayload, this.particlesPayload);
    if (crc !== footer.crc) {
      throw new pr.ProtocolViolationError(
        `payload checksum 0x${crc.toString(16)} does not match footer 0x${footer.crc.toString(16)}`);
    }
    this.mirror.finishCycle(footer.tick);
    const header = this.mirror.header!;
    const stats: CycleStats = {
      tick: footer.tick,
      mode: header.mode,
      band: header.band,
      sensorRecords: this.sensorRecords,
      particleRecords: this.particleRecords,
      headerParticleCount: header.particleCount,
      bytesCycle: this.bytesCycle,
    };
    this.cycles.push(stats);
    this.bytesCycle = 0;
    const command = this.nextCommand();
    if (command !== null) {
      this.send(pr.encodeFrame(pr.FT_COMMAND, pr.encodeCommand(command)));
    } else {
      this.ack(pr.FT_FOOTER);
    }
    this.hooks.onCycle?.(stats, this.mirror);
  }

  private nextCommand(): pr.Command | null {
    if (this.pendingViewpoint !== null) {
      const cmd = this.pendingViewpoint;
      this.pendingViewpoint = null;
      return cmd;
    }
    return this.pendingOther.shift() ?? null;
  }
}

export function connectWebSocket(url: string, session: StreamSession): { socket: WebSocket; ready: Promise<void> } {
  const socket = new WebSocket(url);
  socket.binaryType = "arraybuffer";
  const link: ByteLink = {
    send: (data) => socket.send(data),
    close: () => socket.close(),
  };
  session.attach(link);
  socket.onmessage = (ev) => {
    if (ev.data instanceof ArrayBuffer) {
      session.feed(new Uint8Array(ev.data));
    }
  };
  const ready = new Promise<void>((resolve, reject) => {
    socket.onopen = () => resolve();
    socket.onerror = () => reject(new Error(`websocket to ${url} failed`));
  });
  return { socket, ready };
}
