/**
 * Chained edit sessions: each step edits the image chosen from the
 * previous step's sample gallery. The chain invariant — a step's input
 * equals its parent's chosen output — is enforced by content hash over
 * decoded pixels, so server-side PNG re-encoding cannot break it.
 * Sessions export to self-contained JSON with base64-embedded PNGs.
 */

import { createHash } from "node:crypto";

import { decodePNG } from "./png.js";

export interface EditStep {
  /** Index of the step this one chains from; -1 for the first step. */
  parentIndex: number;
  inputPng: Uint8Array;
  maskPng: Uint8Array;
  prompt: string;
  outputs: Uint8Array[];
  chosenIndex: number | null;
}

export class SessionError extends Error {}

/** Hash of decoded pixel content (encoding-independent). */
export function contentHash(png: Uint8Array): string {
  const img = decodePNG(png);
  return createHash("sha256")
    .update(`${img.width}x${img.height}x${img.channels}:`)
    .update(img.pixels)
    .digest("hex");
}

interface StepJSON {
  parent_index: number;
  input_png: string;
  mask_png: string;
  prompt: string;
  outputs: string[];
  chosen_index: number | null;
}

export interface SessionJSON {
  version: 1;
  initial_image: string;
  active_index: number;
  steps: StepJSON[];
}

const b64 = (bytes: Uint8Array) => Buffer.from(bytes).toString("base64");
const unb64 = (text: string) => new Uint8Array(Buffer.from(text, "base64"));

export class EditSession {
  readonly steps: EditStep[] = [];
  /** Step new edits chain from; moved by undoTo without losing steps. */
  activeIndex = -1;

  constructor(readonly initialImage: Uint8Array) {}

  /** Input image a new step would edit. */
  nextInput(): Uint8Array {
    if (this.activeIndex < 0) return this.initialImage;
    const step = this.steps[this.activeIndex]!;
    if (step.chosenIndex === null) {
      throw new SessionError(
        `step ${this.activeIndex} has no chosen output to chain from`,
      );
    }
    return step.outputs[step.chosenIndex]!;
  }

  /** Append a step chaining from the active step. */
  beginStep(maskPng: Uint8Array, prompt: string): EditStep {
    const step: EditStep = {
      parentIndex: this.activeIndex,
      inputPng: this.nextInput(),
      maskPng,
      prompt,
      outputs: [],
      chosenIndex: null,
    };
    this.steps.push(step);
    this.activeIndex = this.steps.length - 1;
    return step;
  }

  recordOutputs(outputs: Uint8Array[]): void {
    if (this.activeIndex < 0) throw new SessionError("no step in progress");
    if (outputs.length === 0) {
      throw new SessionError("a completed job carries at least one sample");
    }
    this.steps[this.activeIndex]!.outputs = outputs;
  }

  choose(sampleIndex: number): void {
    const step = this.steps[this.activeIndex];
    if (step === undefined) throw new SessionError("no step in progress");
    if (sampleIndex < 0 || sampleIndex >= step.outputs.length) {
      throw new SessionError(
        `sample ${sampleIndex} out of range (${step.outputs.length})`,
      );
    }
    step.chosenIndex = sampleIndex;
  }

  /** Move the restore point; later steps stay recorded. */
  undoTo(stepIndex: number): void {
    if (stepIndex < -1 || stepIndex >= this.steps.length) {
      throw new SessionError(`no step ${stepIndex} to restore`);
    }
    this.activeIndex = stepIndex;
  }

  /** Check input(k) = chosen_output(parent(k)) for every step. */
  verifyChain(): boolean {
    for (const step of this.steps) {
      const expected =
        step.parentIndex < 0
          ? this.initialImage
          : (() => {
              const parent = this.steps[step.parentIndex]!;
              return parent.chosenIndex === null
                ? null
                : parent.outputs[parent.chosenIndex]!;
            })();
      if (expected === null) return false;
      if (contentHash(step.inputPng) !== contentHash(expected)) return false;
    }
    return true;
  }

  toJSON(): SessionJSON {
    return {
      version: 1,
      initial_image: b64(this.initialImage),
      active_index: this.activeIndex,
      steps: this.steps.map((step) => ({
        parent_index: step.parentIndex,
        input_png: b64(step.inputPng),
        mask_png: b64(step.maskPng),
        prompt: step.prompt,
        outputs: step.outputs.map(b64),
        chosen_index: step.chosenIndex,
      })),
    };
  }

  export(): string {
    return JSON.stringify(this.toJSON());
  }

  static import(text: string): EditSession {
    const data = JSON.parse(text) as SessionJSON;
    if (data.version !== 1) {
      throw new SessionError(`unsupported session version ${data.version}`);
    }
    const session = new EditSession(unb64(data.initial_image));
    for (const step of data.steps) {
      session.steps.push({
        parentIndex: step.parent_index,
        inputPng: unb64(step.input_png),
        maskPng: unb64(step.mask_png),
        prompt: step.prompt,
        outputs: step.outputs.map(unb64),
        chosenIndex: step.chosen_index,
      });
    }
    session.activeIndex = data.active_index;
    if (!session.verifyChain()) {
      throw new SessionError("imported session breaks the chain invariant");
    }
    return session;
  }
}
