/**
 * Reader/writer for the DWB1 weight-bundle container.
 *
 * Layout (all little-endian): magic "DWB1", u32 tensor count, then per
 * tensor: u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
 * prod(dims) x f32 row-major data.
 */

export interface TensorRecord {
  name: string;
  dims: number[];
  data: Float32Array;
}

const MAGIC = 'DWB1';

export class BundleFormatError extends Error {}

function tensorByteLength(t: TensorRecord): number {
  const nameBytes = Buffer.byteLength(t.name, 'utf-8');
  return 2 + nameBytes + 1 + 4 * t.dims.length + 4 * t.data.length;
}

export function encodeTensors(tensors: TensorRecord[]): Buffer {
  let total = 4 + 4;
  for (const t of tensors) {
    const size = t.dims.reduce((a, b) => a * b, 1);
    if (t.dims.length === 0 || t.dims.some((d) => d < 1)) {
      throw new BundleFormatError(`tensor '${t.name}': all dims must be >= 1`);
    }
    if (size !== t.data.length) {
      throw new BundleFormatError(
        `tensor '${t.name}': dims [${t.dims}] do not match ${t.data.length} values`);
    }
    for (const v of t.data) {
      if (!Number.isFinite(v)) {
        throw new BundleFormatError(`tensor '${t.name}': non-finite values`);
      }
    }
    total += tensorByteLength(t);
  }
  const buf = Buffer.alloc(total);
  let pos = buf.write(MAGIC, 0, 'ascii');
  pos = buf.writeUInt32LE(tensors.length, pos);
  for (const t of tensors) {
    const nameBytes = Buffer.from(t.name, 'utf-8');
    pos = buf.writeUInt16LE(nameBytes.length, pos);
    pos += nameBytes.copy(buf, pos);
    pos = buf.writeUInt8(t.dims.length, pos);
    for (const d of t.dims) {
      pos = buf.writeUInt32LE(d, pos);
    }
    for (const v of t.data) {
      pos = buf.writeFloatLE(v, pos);
    }
  }
  return buf;
}

export function decodeTensors(buf: Buffer): TensorRecord[] {
  let pos = 0;
  const take = (n: number, what: string): Buffer => {
    if (pos + n > buf.length) {
      throw new BundleFormatError(`truncated payload while reading ${what}`);
    }
    const out = buf.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  if (take(4, 'magic').toString('ascii') !== MAGIC) {
    throw new BundleFormatError(`bad magic, expected "${MAGIC}"`);
  }
  const count = take(4, 'tensor count').readUInt32LE(0);
  const tensors: TensorRecord[] = [];
  for (let i = 0; i < count; i++) {
    const nameLen = take(2, 'name length').readUInt16LE(0);
    const name = take(nameLen, 'name').toString('utf-8');
    const ndim = take(1, 'ndim').readUInt8(0);
    if (ndim === 0) {
      throw new BundleFormatError(`tensor '${name}': zero-dimensional`);
    }
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) {
      dims.push(take(4, 'dims').readUInt32LE(0));
    }
    const size = dims.reduce((a, b) => a * b, 1);
    const raw = take(4 * size, `data of '${name}'`);
    const data = new Float32Array(size);
    for (let k = 0; k < size; k++) {
      data[k] = raw.readFloatLE(4 * k);
    }
    tensors.push({ name, dims, data });
  }
  if (pos !== buf.length) {
    throw new BundleFormatError(`${buf.length - pos} trailing bytes after last tensor`);
  }
  return tensors;
}
