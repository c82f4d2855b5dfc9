/**
 * Writer for the FDTI embedding-store binary format.
 *
 * Little-endian throughout: 4-byte magic "FDTI"; a 36-byte header
 * (version u32, n_drugs u32, n_prots u32, d_drug u32, d_prot u32,
 * n_records u64, label_kind u8, flags u8 with bit 0 = split tags
 * present, 6 reserved zero bytes); drug then protein id tables of
 * u16-length-prefixed UTF-8 strings; drug then protein float32
 * row-major matrices; then 16-byte records (drug u32, prot u32, label
 * f32 with NaN meaning unlabeled, split u8, 3 zero pad bytes).
 */

import { randomBytes } from "node:crypto";
import { renameSync, rmSync, writeFileSync } from "node:fs";
import { ExportError } from "./errors.js";

export const MAGIC = "FDTI";
export const FORMAT_VERSION = 1;
export const HEADER_SIZE = 40;
export const RECORD_SIZE = 16;

export const LABEL_NONE = 0;
export const LABEL_REAL = 1;
export const LABEL_BINARY = 2;

export interface StoreRecord {
  drug: number;
  prot: number;
  label: number | null;
  split: number;
}

export interface StoreData {
  drugIds: string[];
  protIds: string[];
  /** row-major (nDrugs x dDrug) */
  drugMatrix: Float64Array;
  dDrug: number;
  /** row-major (nProts x dProt) */
  protMatrix: Float64Array;
  dProt: number;
  records: StoreRecord[];
  labelKind: number;
  hasSplits: boolean;
}

export function encodeStore(store: StoreData): Buffer {
  const nDrugs = store.drugIds.length;
  const nProts = store.protIds.length;
  if (store.drugMatrix.length !== nDrugs * store.dDrug) {
    throw new ExportError("drug matrix size does not match ids x dim");
  }
  if (store.protMatrix.length !== nProts * store.dProt) {
    throw new ExportError("protein matrix size does not match ids x dim");
  }

  const idBytes = [...store.drugIds, ...store.protIds].map((id) =>
    Buffer.from(id, "utf-8"),
  );
  for (const b of idBytes) {
    if (b.length > 0xffff) throw new ExportError("id exceeds 65535 bytes");
  }
  const idsSize = idBytes.reduce((s, b) => s + 2 + b.length, 0);
  const matSize = 4 * (store.drugMatrix.length + store.protMatrix.length);
  const total =
    HEADER_SIZE + idsSize + matSize + RECORD_SIZE * store.records.length;

  // alloc zero-fills, which covers the reserved bytes and record padding
  const buf = Buffer.alloc(total);
  let pos = 0;
  pos += buf.write(MAGIC, pos, "ascii");
  pos = buf.writeUInt32LE(FORMAT_VERSION, pos);
  pos = buf.writeUInt32LE(nDrugs, pos);
  pos = buf.writeUInt32LE(nProts, pos);
  pos = buf.writeUInt32LE(store.dDrug, pos);
  pos = buf.writeUInt32LE(store.dProt, pos);
  pos = buf.writeBigUInt64LE(BigInt(store.records.length), pos);
  pos = buf.writeUInt8(store.labelKind, pos);
  pos = buf.writeUInt8(store.hasSplits ? 1 : 0, pos);
  pos += 6;

  for (const b of idBytes) {
    pos = buf.writeUInt16LE(b.length, pos);
    pos += b.copy(buf, pos);
  }
  for (const mat of [store.drugMatrix, store.protMatrix]) {
    for (let i = 0; i < mat.length; i++) {
      pos = buf.writeFloatLE(Math.fround(mat[i]!), pos);
    }
  }
  for (const rec of store.records) {
    pos = buf.writeUInt32LE(rec.drug, pos);
    pos = buf.writeUInt32LE(rec.prot, pos);
    pos = buf.writeFloatLE(rec.label === null ? NaN : rec.label, pos);
    pos = buf.writeUInt8(store.hasSplits ? rec.split : 0, pos);
    pos += 3;
  }
  if (pos !== total) {
    throw new ExportError(`internal size mismatch: wrote ${pos} of ${total}`);
  }
  return buf;
}

/** Write bytes atomically: temp file in the same directory, then rename. */
export function atomicWrite(path: string, data: Buffer | string): void {
  const tmp = `${path}.tmp-${process.pid}-${randomBytes(4).toString("hex")}`;
  try {
    writeFileSync(tmp, data);
    renameSync(tmp, path);
  } catch (err) {
    rmSync(tmp, { force: true });
    throw new ExportError(
      `cannot write ${path}: ${(err as Error).message}`,
    );
  }
}

export function writeStore(store: StoreData, path: string): void {
  atomicWrite(path, encodeStore(store));
}

export interface StoreHeader {
  version: number;
  nDrugs: number;
  nProts: number;
  dDrug: number;
  dProt: number;
  nRecords: number;
  labelKind: number;
  hasSplits: boolean;
}

/** Decode just the fixed header; used by tests and the CLI summary. */
export function readHeader(buf: Buffer): StoreHeader {
  if (buf.length < HEADER_SIZE) {
    throw new ExportError(`file too short for a header: ${buf.length} bytes`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new ExportError(`bad magic "${buf.toString("ascii", 0, 4)}"`);
  }
  return {
    version: buf.readUInt32LE(4),
    nDrugs: buf.readUInt32LE(8),
    nProts: buf.readUInt32LE(12),
    dDrug: buf.readUInt32LE(16),
    dProt: buf.readUInt32LE(20),
    nRecords: Number(buf.readBigUInt64LE(24)),
    labelKind: buf.readUInt8(32),
    hasSplits: (buf.readUInt8(33) & 1) === 1,
  };
}

/**
 * The binary format has no provenance field, so the encoder identity
 * goes in a sidecar text file next to the store.
 */
export function writeSidecar(
  storePath: string,
  info: Record<string, string | number>,
): string {
  const path = `${storePath}.encoders.txt`;
  const body =
    Object.entries(info)
      .map(([k, v]) => `${k} = ${v}`)
      .join("\n") + "\n";
  atomicWrite(path, body);
  return path;
}
