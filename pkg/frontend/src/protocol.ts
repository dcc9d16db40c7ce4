// Binary stream codec. Little-endian throughout; frame = "DC" magic,
// version u8, type u8, payload length u32, payload. Kept dependency-free
// so the decoder can be pinned against the shared golden fixtures.

export const MAGIC0 = 0x44; // "D"
export const MAGIC1 = 0x43; // "C"
export const VERSION = 1;
export const FRAME_HEADER_SIZE = 8;
export const MAX_PAYLOAD = 16 * 1024 * 1024;

export const FT_HEADER = 1;
export const FT_SENSORS = 2;
export const FT_PARTICLES = 3;
export const FT_FOOTER = 4;
export const FT_ACK = 5;
export const FT_COMMAND = 6;
export const FRAME_TYPES = [
  FT_HEADER, FT_SENSORS, FT_PARTICLES, FT_FOOTER, FT_ACK, FT_COMMAND,
] as const;

export const MODE_FULL = 0;
export const MODE_DELTA = 1;

export const CMD_SET_VIEWPOINT = 1;
export const CMD_SET_MODE = 2;
export const CMD_REQUEST_FULL = 3;

export const ACK_OK = 0;
export const ACK_ERROR = 1;

const HEADER_PAYLOAD_SIZE = 28; // mode u8, tick u64, sensors u16, particles u32, room 3xf32, band u8
const FOOTER_PAYLOAD_SIZE = 12; // tick u64, crc u32
const ACK_PAYLOAD_SIZE = 2;     // acked type u8, status u8
export const SENSOR_FULL_SIZE = 18;   // id u16, x/y/z f32, value f32
export const SENSOR_DELTA_SIZE = 6;   // id u16, value f32
export const PARTICLE_FULL_SIZE = 20; // id u32, x/y/z f32, value f32
export const PARTICLE_DELTA_SIZE = 8; // id u32, value f32

export class ProtocolError extends Error {}
export class BadMagicError extends ProtocolError {}
export class UnknownVersionError extends ProtocolError {}
export class UnknownFrameTypeError extends ProtocolError {}
export class PayloadTooLargeError extends ProtocolError {}
export class ShortPayloadError extends ProtocolError {}
export class TrailingBytesError extends ProtocolError {}
export class UnknownCommandError extends ProtocolError {}
export class ProtocolViolationError extends ProtocolError {}

export interface Frame {
  frameType: number;
  payload: Uint8Array;
}

export interface Header {
  mode: number;
  tick: number;
  sensorCount: number;
  particleCount: number;
  roomLwh: [number, number, number];
  band: number;
}

export interface FullRecords {
  ids: Uint32Array;
  x: Float32Array;
  y: Float32Array;
  z: Float32Array;
  values: Float32Array;
}

export interface DeltaRecords {
  ids: Uint32Array;
  values: Float32Array;
}

export interface Footer {
  tick: number;
  crc: number;
}

export interface Ack {
  ackedType: number;
  status: number;
}

export interface Command {
  kind: number;
  viewpointCm?: [number, number, number];
  mode?: number;
}

function view(data: Uint8Array): DataView {
  return new DataView(data.buffer, data.byteOffset, data.byteLength);
}

function readTick(v: DataView, offset: number): number {
  const tick = v.getBigUint64(offset, true);
  if (tick > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new ProtocolViolationError(`tick ${tick} exceeds safe integer range`);
  }
  return Number(tick);
}

// -- frames -------------------------------------------------------------

export function encodeFrame(frameType: number, payload: Uint8Array): Uint8Array {
  if (!FRAME_TYPES.includes(frameType as (typeof FRAME_TYPES)[number])) {
    throw new UnknownFrameTypeError(`unknown frame type ${frameType}`);
  }
  if (payload.length > MAX_PAYLOAD) {
    throw new PayloadTooLargeError(`payload of ${payload.length} bytes exceeds ${MAX_PAYLOAD}`);
  }
  const out = new Uint8Array(FRAME_HEADER_SIZE + payload.length);
  const v = view(out);
  out[0] = MAGIC0;
  out[1] = MAGIC1;
  out[2] = VERSION;
  out[3] = frameType;
  v.setUint32(4, payload.length, true);
  out.set(payload, FRAME_HEADER_SIZE);
  return out;
}

export class StreamDecoder {
  private chunks: Uint8Array[] = [];
  private size = 0;

  constructor(private maxPayload: number = MAX_PAYLOAD) {}

  feed(data: Uint8Array): Frame[] {
    if (data.length > 0) {
      this.chunks.push(data);
      this.size += data.length;
    }
    const frames: Frame[] = [];
    while (this.size >= FRAME_HEADER_SIZE) {
      const head = this.peek(FRAME_HEADER_SIZE);
      if (head[0] !== MAGIC0 || head[1] !== MAGIC1) {
        throw new BadMagicError(`bad magic 0x${head[0].toString(16)}${head[1].toString(16)}`);
      }
      if (head[2] !== VERSION) {
        throw new UnknownVersionError(`unknown version ${head[2]}`);
      }
      const frameType = head[3];
      if (!FRAME_TYPES.includes(frameType as (typeof FRAME_TYPES)[number])) {
        throw new UnknownFrameTypeError(`unknown frame type ${frameType}`);
      }
      const length = view(head).getUint32(4, true);
      if (length > this.maxPayload) {
        throw new PayloadTooLargeError(`announced payload of ${length} bytes exceeds ${this.maxPayload}`);
      }
      if (this.size < FRAME_HEADER_SIZE + length) {
        break;
      }
      const whole = this.take(FRAME_HEADER_SIZE + length);
      frames.push({ frameType, payload: whole.subarray(FRAME_HEADER_SIZE) });
    }
    return frames;
  }

  get buffered(): number {
    return this.size;
  }

  private compact(): Uint8Array {
    if (this.chunks.length !== 1) {
      const joined = new Uint8Array(this.size);
      let at = 0;
      for (const c of this.chunks) {
        joined.set(c, at);
        at += c.length;
      }
      this.chunks = [joined];
    }
    return this.chunks[0];
  }

  private peek(n: number): Uint8Array {
    if (this.chunks[0].length >= n) {
      return this.chunks[0];
    }
    return this.compact();
  }

  private take(n: number): Uint8Array {
    const buf = this.compact();
    const out = buf.subarray(0, n);
    const rest = buf.subarray(n);
    this.chunks = rest.length > 0 ? [rest] : [];
    this.size = rest.length;
    return out;
  }
}

// -- payloads -----------------------------------------------------------

function checkSize(payload: Uint8Array, expected: number, what: string): void {
  if (payload.length < expected) {
    throw new ShortPayloadError(`${what} needs ${expected} bytes, got ${payload.length}`);
  }
  if (payload.length > expected) {
    throw new TrailingBytesError(`${what} carries ${payload.length - expected} trailing bytes`);
  }
}

function checkRecordSize(payload: Uint8Array, stride: number, what: string): number {
  if (payload.length % stride !== 0) {
    throw new ShortPayloadError(
      `${what} payload of ${payload.length} bytes is not a multiple of ${stride}`);
  }
  return payload.length / stride;
}

export function encodeHeader(h: Header): Uint8Array {
  const out = new Uint8Array(HEADER_PAYLOAD_SIZE);
  const v = view(out);
  v.setUint8(0, h.mode);
  v.setBigUint64(1, BigInt(h.tick), true);
  v.setUint16(9, h.sensorCount, true);
  v.setUint32(11, h.particleCount, true);
  v.setFloat32(15, h.roomLwh[0], true);
  v.setFloat32(19, h.roomLwh[1], true);
  v.setFloat32(23, h.roomLwh[2], true);
  v.setUint8(27, h.band);
  return out;
}

export function parseHeader(payload: Uint8Array): Header {
  checkSize(payload, HEADER_PAYLOAD_SIZE, "HEADER");
  const v = view(payload);
  const mode = v.getUint8(0);
  if (mode !== MODE_FULL && mode !== MODE_DELTA) {
    throw new ProtocolViolationError(`unknown mode ${mode}`);
  }
  return {
    mode,
    tick: readTick(v, 1),
    sensorCount: v.getUint16(9, true),
    particleCount: v.getUint32(11, true),
    roomLwh: [v.getFloat32(15, true), v.getFloat32(19, true), v.getFloat32(23, true)],
    band: v.getUint8(27),
  };
}

function encodeRecords(
  ids: ArrayLike<number>, positions: ArrayLike<number> | null,
  values: ArrayLike<number>, stride: number, wideId: boolean,
): Uint8Array {
  const n = ids.length;
  if (values.length !== n || (positions !== null && positions.length !== 3 * n)) {
    throw new ProtocolViolationError("record arrays disagree on length");
  }
  const out = new Uint8Array(n * stride);
  const v = view(out);
  for (let k = 0; k < n; k++) {
    let at = k * stride;
    if (wideId) {
      v.setUint32(at, ids[k], true);
      at += 4;
    } else {
      v.setUint16(at, ids[k], true);
      at += 2;
    }
    if (positions !== null) {
      v.setFloat32(at, positions[3 * k], true);
      v.setFloat32(at + 4, positions[3 * k + 1], true);
      v.setFloat32(at + 8, positions[3 * k + 2], true);
      at += 12;
    }
    v.setFloat32(at, values[k], true);
  }
  return out;
}

export function encodeSensorsFull(
  ids: ArrayLike<number>, positions: ArrayLike<number>, values: ArrayLike<number>,
): Uint8Array {
  return encodeRecords(ids, positions, values, SENSOR_FULL_SIZE, false);
}

export function encodeSensorsDelta(ids: ArrayLike<number>, values: ArrayLike<number>): Uint8Array {
  return encodeRecords(ids, null, values, SENSOR_DELTA_SIZE, false);
}

export function encodeParticlesFull(
  ids: ArrayLike<number>, positions: ArrayLike<number>, values: ArrayLike<number>,
): Uint8Array {
  return encodeRecords(ids, positions, values, PARTICLE_FULL_SIZE, true);
}

export function encodeParticlesDelta(ids: ArrayLike<number>, values: ArrayLike<number>): Uint8Array {
  return encodeRecords(ids, null, values, PARTICLE_DELTA_SIZE, true);
}

function parseRecords(payload: Uint8Array, stride: number, wideId: boolean, what: string): FullRecords | DeltaRecords {
  const n = checkRecordSize(payload, stride, what);
  const v = view(payload);
  const ids = new Uint32Array(n);
  const values = new Float32Array(n);
  const full = stride === SENSOR_FULL_SIZE || stride === PARTICLE_FULL_SIZE;
  const x = full ? new Float32Array(n) : null;
  const y = full ? new Float32Array(n) : null;
  const z = full ? new Float32Array(n) : null;
  for (let k = 0; k < n; k++) {
    let at = k * stride;
    if (wideId) {
      ids[k] = v.getUint32(at, true);
      at += 4;
    } else {
      ids[k] = v.getUint16(at, true);
      at += 2;
    }
    if (full) {
      x![k] = v.getFloat32(at, true);
      y![k] = v.getFloat32(at + 4, true);
      z![k] = v.getFloat32(at + 8, true);
      at += 12;
    }
    values[k] = v.getFloat32(at, true);
  }
  if (full) {
    return { ids, x: x!, y: y!, z: z!, values };
  }
  return { ids, values };
}

export function parseSensors(payload: Uint8Array, mode: number): FullRecords | DeltaRecords {
  const fullMode = mode === MODE_FULL;
  return parseRecords(
    payload, fullMode ? SENSOR_FULL_SIZE : SENSOR_DELTA_SIZE, false,
    fullMode ? "SENSORS full" : "SENSORS delta");
}

export function parseParticles(payload: Uint8Array, mode: number): FullRecords | DeltaRecords {
  const fullMode = mode === MODE_FULL;
  return parseRecords(
    payload, fullMode ? PARTICLE_FULL_SIZE : PARTICLE_DELTA_SIZE, true,
    fullMode ? "PARTICLES full" : "PARTICLES delta");
}

export function encodeFooter(f: Footer): Uint8Array {
  const out = new Uint8Array(FOOTER_PAYLOAD_SIZE);
  const v = view(out);
  v.setBigUint64(0, BigInt(f.tick), true);
  v.setUint32(8, f.crc >>> 0, true);
  return out;
}

export function parseFooter(payload: Uint8Array): Footer {
  checkSize(payload, FOOTER_PAYLOAD_SIZE, "FOOTER");
  const v = view(payload);
  return { tick: readTick(v, 0), crc: v.getUint32(8, true) };
}

export function encodeAck(ackedType: number, status: number = ACK_OK): Uint8Array {
  if (!FRAME_TYPES.includes(ackedType as (typeof FRAME_TYPES)[number])) {
    throw new UnknownFrameTypeError(`cannot ack unknown frame type ${ackedType}`);
  }
  return Uint8Array.of(ackedType, status);
}

export function parseAck(payload: Uint8Array): Ack {
  checkSize(payload, ACK_PAYLOAD_SIZE, "ACK");
  return { ackedType: payload[0], status: payload[1] };
}

export function encodeCommand(cmd: Command): Uint8Array {
  if (cmd.kind === CMD_SET_VIEWPOINT) {
    if (!cmd.viewpointCm) {
      throw new UnknownCommandError("SET_VIEWPOINT needs a viewpoint");
    }
    const out = new Uint8Array(13);
    const v = view(out);
    v.setUint8(0, cmd.kind);
    v.setFloat32(1, cmd.viewpointCm[0], true);
    v.setFloat32(5, cmd.viewpointCm[1], true);
    v.setFloat32(9, cmd.viewpointCm[2], true);
    return out;
  }
  if (cmd.kind === CMD_SET_MODE) {
    if (cmd.mode !== MODE_FULL && cmd.mode !== MODE_DELTA) {
      throw new UnknownCommandError(`SET_MODE needs a valid mode, got ${cmd.mode}`);
    }
    return Uint8Array.of(cmd.kind, cmd.mode);
  }
  if (cmd.kind === CMD_REQUEST_FULL) {
    return Uint8Array.of(cmd.kind);
  }
  throw new UnknownCommandError(`unknown command kind ${cmd.kind}`);
}

export function parseCommand(payload: Uint8Array): Command {
  if (payload.length < 1) {
    throw new ShortPayloadError("COMMAND payload is empty");
  }
  const kind = payload[0];
  const v = view(payload);
  if (kind === CMD_SET_VIEWPOINT) {
    checkSize(payload, 13, "SET_VIEWPOINT");
    return {
      kind,
      viewpointCm: [v.getFloat32(1, true), v.getFloat32(5, true), v.getFloat32(9, true)],
    };
  }
  if (kind === CMD_SET_MODE) {
    checkSize(payload, 2, "SET_MODE");
    const mode = payload[1];
    if (mode !== MODE_FULL && mode !== MODE_DELTA) {
      throw new UnknownCommandError(`SET_MODE carries unknown mode ${mode}`);
    }
    return { kind, mode };
  }
  if (kind === CMD_REQUEST_FULL) {
    checkSize(payload, 1, "REQUEST_FULL");
    return { kind };
  }
  throw new UnknownCommandError(`unknown command kind ${kind}`);
}

// -- checksums ----------------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let bit = 0; bit < 8; bit++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[i] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array, seed: number = 0): number {
  let c = (seed ^ 0xffffffff) >>> 0;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function payloadCrc(sensorsPayload: Uint8Array, particlesPayload: Uint8Array): number {
  return crc32(particlesPayload, crc32(sensorsPayload));
}
