// Client-side copy of the streamed field, in wire precision. Full cycles
// replace the level wholesale; delta cycles patch values by wire id.

import * as pr from "./protocol.js";

export class FieldMirror {
  room: [number, number, number] | null = null;
  header: pr.Header | null = null;
  tick = -1;
  band: number | null = null;
  fullCycles = 0;
  deltaCycles = 0;

  sensorIds = new Uint32Array(0);
  sensorValues = new Float32Array(0);
  particleIds = new Uint32Array(0);
  positions = new Float32Array(0); // xyz interleaved
  values = new Float32Array(0);

  private sensorIndex = new Map<number, number>();
  private particleIndex = new Map<number, number>();

  get particleCount(): number {
    return this.particleIds.length;
  }

  applyHeader(header: pr.Header): void {
    if (header.tick < this.tick) {
      throw new pr.ProtocolViolationError(
        `tick went backwards: ${header.tick} after ${this.tick}`);
    }
    if (this.room !== null && !sameRoom(header.roomLwh, this.room)) {
      throw new pr.ProtocolViolationError(
        `room changed from ${this.room} to ${header.roomLwh}`);
    }
    if (header.mode === pr.MODE_DELTA && this.header === null) {
      throw new pr.ProtocolViolationError("delta cycle before any full cycle");
    }
    this.room = header.roomLwh;
    this.header = header;
  }

  applySensors(payload: Uint8Array): number {
    const header = this.needHeader();
    const recs = pr.parseSensors(payload, header.mode);
    if (header.mode === pr.MODE_FULL) {
      this.sensorIds = recs.ids.slice();
      this.sensorValues = recs.values.slice();
      this.sensorIndex = indexOf(recs.ids);
    } else {
      for (let k = 0; k < recs.ids.length; k++) {
        const at = this.sensorIndex.get(recs.ids[k]);
        if (at === undefined) {
          throw new pr.ProtocolViolationError(`delta for unknown sensor ${recs.ids[k]}`);
        }
        this.sensorValues[at] = recs.values[k];
      }
    }
    return recs.ids.length;
  }

  applyParticles(payload: Uint8Array): number {
    const header = this.needHeader();
    const recs = pr.parseParticles(payload, header.mode);
    if (header.mode === pr.MODE_FULL) {
      const full = recs as pr.FullRecords;
      const n = full.ids.length;
      this.particleIds = full.ids.slice();
      this.values = full.values.slice();
      this.positions = new Float32Array(3 * n);
      for (let k = 0; k < n; k++) {
        this.positions[3 * k] = full.x[k];
        this.positions[3 * k + 1] = full.y[k];
        this.positions[3 * k + 2] = full.z[k];
      }
      this.particleIndex = indexOf(full.ids);
    } else {
      for (let k = 0; k < recs.ids.length; k++) {
        const at = this.particleIndex.get(recs.ids[k]);
        if (at === undefined) {
          throw new pr.ProtocolViolationError(`delta for unknown particle ${recs.ids[k]}`);
        }
        this.values[at] = recs.values[k];
      }
    }
    return recs.ids.length;
  }

  finishCycle(footerTick: number): void {
    const header = this.needHeader();
    if (footerTick !== header.tick) {
      throw new pr.ProtocolViolationError(
        `footer tick ${footerTick} does not match header tick ${header.tick}`);
    }
    if (this.sensorIds.length !== header.sensorCount) {
      throw new pr.ProtocolViolationError(
        `mirror holds ${this.sensorIds.length} sensors, header said ${header.sensorCount}`);
    }
    if (this.particleIds.length !== header.particleCount) {
      throw new pr.ProtocolViolationError(
        `mirror holds ${this.particleIds.length} particles, header said ${header.particleCount}`);
    }
    this.tick = header.tick;
    this.band = header.band;
    if (header.mode === pr.MODE_FULL) {
      this.fullCycles += 1;
    } else {
      this.deltaCycles += 1;
    }
  }

  private needHeader(): pr.Header {
    if (this.header === null) {
      throw new pr.ProtocolViolationError("frame before any HEADER");
    }
    return this.header;
  }
}

function sameRoom(a: [number, number, number], b: [number, number, number]): boolean {
  return a[0] === b[0] && a[1] === b[1] && a[2] === b[2];
}

function indexOf(ids: Uint32Array): Map<number, number> {
  const index = new Map<number, number>();
  for (let k = 0; k < ids.length; k++) {
    index.set(ids[k], k);
  }
  return index;
}
