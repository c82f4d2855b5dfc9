/**
 * Command line front end:
 *
 *   fdti-export --drugs drugs.tsv --proteins proteins.tsv \
 *       --interactions interactions.tsv --out store.fdti \
 *       [--drug-encoder id] [--prot-encoder id] \
 *       [--d-drug n] [--d-prot n] [--label-kind auto|none|real|binary]
 *
 * Exit codes: 0 success, 2 usage errors, 3 manifest/encoder/write
 * errors. Warnings and per-record skips go to stderr.
 */

import { parseArgs } from "node:util";
import { EncoderLoadError, ExportError, ManifestError } from "./errors.js";
import { loadManifest } from "./manifest.js";
import { ExportOptions, LabelKindChoice, runExport } from "./export.js";

const USAGE =
  "usage: fdti-export --drugs FILE --proteins FILE --interactions FILE " +
  "--out FILE [--drug-encoder ID] [--prot-encoder ID] [--d-drug N] " +
  "[--d-prot N] [--label-kind auto|none|real|binary]";

function parsePositiveInt(value: string, flag: string): number {
  const n = Number(value);
  if (!Number.isInteger(n) || n < 1) {
    throw new RangeError(`${flag} must be a positive integer, got "${value}"`);
  }
  return n;
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        drugs: { type: "string" },
        proteins: { type: "string" },
        interactions: { type: "string" },
        out: { type: "string" },
        "drug-encoder": { type: "string" },
        "prot-encoder": { type: "string" },
        "d-drug": { type: "string" },
        "d-prot": { type: "string" },
        "label-kind": { type: "string" },
        help: { type: "boolean" },
      },
      allowPositionals: false,
    });
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  const values = parsed.values;
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  for (const flag of ["drugs", "proteins", "interactions", "out"] as const) {
    if (values[flag] === undefined) {
      console.error(`missing required --${flag}\n${USAGE}`);
      return 2;
    }
  }
  const kinds = ["auto", "none", "real", "binary"];
  if (values["label-kind"] !== undefined &&
      !kinds.includes(values["label-kind"])) {
    console.error(`--label-kind must be one of ${kinds.join("|")}`);
    return 2;
  }

  try {
    const options: ExportOptions = {
      drugEncoder: values["drug-encoder"],
      protEncoder: values["prot-encoder"],
      labelKind: values["label-kind"] as LabelKindChoice | undefined,
      dDrug: values["d-drug"] === undefined
        ? undefined
        : parsePositiveInt(values["d-drug"], "--d-drug"),
      dProt: values["d-prot"] === undefined
        ? undefined
        : parsePositiveInt(values["d-prot"], "--d-prot"),
    };
    const manifest = loadManifest(
      values.drugs!,
      values.proteins!,
      values.interactions!,
    );
    const report = runExport(manifest, values.out!, options);
    for (const warning of report.warnings) {
      console.error(`warning: ${warning}`);
    }
    for (const skip of report.skipped) {
      console.error(
        `skipped (${skip.kind}) ${skip.id} at line ${skip.line}: ` +
          skip.reason,
      );
    }
    console.log(
      `wrote ${report.outPath}: n_drugs=${report.nDrugs} ` +
        `n_prots=${report.nProts} n_records=${report.nRecords}`,
    );
    return 0;
  } catch (err) {
    if (err instanceof RangeError) {
      console.error(`${err.message}\n${USAGE}`);
      return 2;
    }
    if (
      err instanceof ManifestError ||
      err instanceof EncoderLoadError ||
      err instanceof ExportError
    ) {
      console.error(err.message);
      return 3;
    }
    throw err;
  }
}

