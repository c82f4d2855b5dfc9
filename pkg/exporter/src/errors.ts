/** A manifest file is malformed or internally inconsistent. */
export class ManifestError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ManifestError";
  }
}

/** The requested encoder id is unknown or its configuration is invalid. */
export class EncoderLoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EncoderLoadError";
  }
}

/** The export cannot produce a valid store file. */
export class ExportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ExportError";
  }
}
