import { Manifest } from "./manifest.js";
import {
  DEFAULT_DRUG_ENCODER,
  DEFAULT_PROT_ENCODER,
  MAX_RESIDUES,
  makeEncoder,
  validateSmiles,
} from "./encoders.js";
import {
  LABEL_BINARY,
  LABEL_NONE,
  LABEL_REAL,
  StoreData,
  StoreRecord,
  writeSidecar,
  writeStore,
} from "./store.js";
import { ExportError } from "./errors.js";

export type LabelKindChoice = "auto" | "none" | "real" | "binary";

export interface ExportOptions {
  drugEncoder?: string;
  protEncoder?: string;
  dDrug?: number;
  dProt?: number;
  labelKind?: LabelKindChoice;
}

export interface SkippedRecord {
  kind: "invalid-smiles" | "skipped-drug-ref";
  id: string;
  line: number;
  reason: string;
}

export interface ExportReport {
  outPath: string;
  sidecarPath: string;
  nDrugs: number;
  nProts: number;
  nRecords: number;
  labelKind: number;
  hasSplits: boolean;
  warnings: string[];
  skipped: SkippedRecord[];
}

function resolveLabelKind(
  choice: LabelKindChoice,
  records: StoreRecord[],
): number {
  const present = records
    .filter((r) => r.label !== null)
    .map((r) => r.label as number);
  const allBinary = present.every((v) => v === 0 || v === 1);
  if (choice === "auto") {
    if (present.length === 0) return LABEL_NONE;
    return allBinary ? LABEL_BINARY : LABEL_REAL;
  }
  if (choice === "none") {
    if (present.length > 0) {
      throw new ExportError(
        `label kind "none" requested but ${present.length} record(s) ` +
          `carry labels`,
      );
    }
    return LABEL_NONE;
  }
  if (choice === "binary") {
    if (!allBinary) {
      throw new ExportError(
        'label kind "binary" requested but a label is not 0 or 1',
      );
    }
    return LABEL_BINARY;
  }
  return LABEL_REAL;
}

/**
 * Encode a parsed manifest and write the store plus its encoder
 * sidecar. Drugs with invalid SMILES are skipped (with the
 * interactions that reference them) and reported; over-length protein
 * sequences are truncated with a warning.
 */
export function runExport(
  manifest: Manifest,
  outPath: string,
  options: ExportOptions = {},
): ExportReport {
  const dDrug = options.dDrug ?? 32;
  const dProt = options.dProt ?? 48;
  const drugEncoder = makeEncoder(
    options.drugEncoder ?? DEFAULT_DRUG_ENCODER,
    dDrug,
  );
  const protEncoder = makeEncoder(
    options.protEncoder ?? DEFAULT_PROT_ENCODER,
    dProt,
  );

  const warnings: string[] = [];
  const skipped: SkippedRecord[] = [];

  const drugIds: string[] = [];
  const drugIndex = new Map<string, number>();
  const drugRows: Float64Array[] = [];
  for (const drug of manifest.drugs) {
    const problem = validateSmiles(drug.smiles);
    if (problem !== null) {
      skipped.push({
        kind: "invalid-smiles",
        id: drug.id,
        line: drug.line,
        reason: problem,
      });
      continue;
    }
    drugIndex.set(drug.id, drugIds.length);
    drugIds.push(drug.id);
    drugRows.push(drugEncoder.encode(drug.smiles));
  }

  const protIds: string[] = [];
  const protIndex = new Map<string, number>();
  const protRows: Float64Array[] = [];
  for (const prot of manifest.proteins) {
    let seq = prot.sequence;
    if (seq.length > MAX_RESIDUES) {
      warnings.push(
        `protein ${prot.id}: ${seq.length} residues exceeds the ` +
          `${MAX_RESIDUES}-residue limit; truncated`,
      );
      seq = seq.slice(0, MAX_RESIDUES);
    }
    protIndex.set(prot.id, protIds.length);
    protIds.push(prot.id);
    protRows.push(protEncoder.encode(seq));
  }

  const records: StoreRecord[] = [];
  for (const inter of manifest.interactions) {
    const drug = drugIndex.get(inter.drugId);
    if (drug === undefined) {
      skipped.push({
        kind: "skipped-drug-ref",
        id: `${inter.drugId}:${inter.protId}`,
        line: inter.line,
        reason: `drug "${inter.drugId}" was skipped`,
      });
      continue;
    }
    records.push({
      drug,
      prot: protIndex.get(inter.protId)!,
      label: inter.label,
      split: inter.split,
    });
  }

  const flatten = (rows: Float64Array[], dim: number) => {
    const out = new Float64Array(rows.length * dim);
    rows.forEach((row, i) => out.set(row, i * dim));
    return out;
  };

  const store: StoreData = {
    drugIds,
    protIds,
    drugMatrix: flatten(drugRows, dDrug),
    dDrug,
    protMatrix: flatten(protRows, dProt),
    dProt,
    records,
    labelKind: resolveLabelKind(options.labelKind ?? "auto", records),
    hasSplits: manifest.hasSplits,
  };
  writeStore(store, outPath);
  const sidecarPath = writeSidecar(outPath, {
    drug_encoder: drugEncoder.id,
    drug_dim: dDrug,
    prot_encoder: protEncoder.id,
    prot_dim: dProt,
    max_residues: MAX_RESIDUES,
    format_version: 1,
  });

  return {
    outPath,
    sidecarPath,
    nDrugs: drugIds.length,
    nProts: protIds.length,
    nRecords: records.length,
    labelKind: store.labelKind,
    hasSplits: store.hasSplits,
    warnings,
    skipped,
  };
}
