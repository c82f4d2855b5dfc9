export { ManifestError, EncoderLoadError, ExportError } from "./errors.js";
export {
  Manifest,
  DrugEntry,
  ProteinEntry,
  InteractionEntry,
  SPLIT_NAMES,
  parseDrugs,
  parseProteins,
  parseInteractions,
  parseManifest,
  loadManifest,
} from "./manifest.js";
export {
  Encoder,
  MAX_RESIDUES,
  DEFAULT_DRUG_ENCODER,
  DEFAULT_PROT_ENCODER,
  makeEncoder,
  tokenizeSmiles,
  validateSmiles,
} from "./encoders.js";
export {
  MAGIC,
  FORMAT_VERSION,
  HEADER_SIZE,
  RECORD_SIZE,
  LABEL_NONE,
  LABEL_REAL,
  LABEL_BINARY,
  StoreData,
  StoreRecord,
  StoreHeader,
  encodeStore,
  writeStore,
  readHeader,
  writeSidecar,
  atomicWrite,
} from "./store.js";
export {
  ExportOptions,
  ExportReport,
  SkippedRecord,
  LabelKindChoice,
  runExport,
} from "./export.js";
export { main } from "./cli.js";
