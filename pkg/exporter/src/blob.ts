/**
 * Raw float32 tensor blobs shared with the pipeline.
 *
 * Layout (little-endian): magic "TB32", uint32 rank (1..4), four uint16
 * dims (zero beyond the rank), then the float32 payload in row-major
 * order. Each dim is capped at 65535.
 */

const MAGIC = "TB32";
export const HEADER_BYTES = 16;
const MAX_DIM = 0xffff;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function encodeTensor(tensor: Tensor): Buffer {
  const { dims, data } = tensor;
  if (dims.length < 1 || dims.length > 4) {
    throw new Error(`tensor rank ${dims.length} outside 1..4`);
  }
  let count = 1;
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1 || d > MAX_DIM) {
      throw new Error(`tensor dim ${d} outside 1..${MAX_DIM}`);
    }
    count *= d;
  }
  if (data.length !== count) {
    throw new Error(`payload has ${data.length} values, dims imply ${count}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * count);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(dims.length, 4);
  for (let i = 0; i < 4; i++) {
    buf.writeUInt16LE(i < dims.length ? dims[i] : 0, 8 + 2 * i);
  }
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

export function decodeTensor(buf: Buffer): Tensor {
  if (buf.length < HEADER_BYTES) {
    throw new Error("tensor blob truncated before header");
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad tensor magic ${buf.toString("ascii", 0, 4)}`);
  }
  const rank = buf.readUInt32LE(4);
  if (rank < 1 || rank > 4) {
    throw new Error(`bad tensor rank ${rank}`);
  }
  const dims: number[] = [];
  let count = 1;
  for (let i = 0; i < 4; i++) {
    const d = buf.readUInt16LE(8 + 2 * i);
    if (i < rank) {
      if (d === 0) throw new Error("zero dim inside rank");
      dims.push(d);
      count *= d;
    } else if (d !== 0) {
      throw new Error(`nonzero dim ${d} beyond rank ${rank}`);
    }
  }
  if (buf.length !== HEADER_BYTES + 4 * count) {
    throw new Error(
      `tensor payload is ${buf.length - HEADER_BYTES} bytes, expected ${4 * count}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { dims, data };
}
