import { describe, expect, it } from "vitest";

import { encodeMaskPNG, encodePNG } from "../src/png.js";
import { contentHash, EditSession, SessionError } from "../src/session.js";

function solidImage(value: number, size = 8): Uint8Array {
  return encodePNG(new Uint8Array(size * size * 3).fill(value), size, size, 3);
}

function someMask(size = 8): Uint8Array {
  const data = new Uint8Array(size * size);
  for (let i = 0; i < data.length; i += 3) data[i] = 1;
  return encodeMaskPNG(data, size, size);
}

/** Run one full step: begin, record a gallery, choose a sample. */
function runStep(
  session: EditSession,
  outputs: Uint8Array[],
  chosen: number,
): void {
  session.beginStep(someMask(), `edit ${session.steps.length}`);
  session.recordOutputs(outputs);
  session.choose(chosen);
}

describe("EditSession", () => {
  // [SECONDARY] acceptance: a 3-step session maintains
  // input(k) = chosen_output(k-1) by content hash.
  it("3 chained steps keep input(k) = chosen_output(k-1) by hash", () => {
    const session = new EditSession(solidImage(10));
    runStep(session, [solidImage(20), solidImage(30)], 1);
    runStep(session, [solidImage(40), solidImage(50)], 0);
    runStep(session, [solidImage(60)], 0);

    expect(session.steps).toHaveLength(3);
    expect(session.verifyChain()).toBe(true);
    expect(contentHash(session.steps[0]!.inputPng)).toBe(
      contentHash(solidImage(10)),
    );
    expect(contentHash(session.steps[1]!.inputPng)).toBe(
      contentHash(solidImage(30)),
    );
    expect(contentHash(session.steps[2]!.inputPng)).toBe(
      contentHash(solidImage(40)),
    );
  });

  it("content hash ignores PNG byte layout, not pixels", () => {
    // Same pixels, encoded twice, hash equal; different pixels differ.
    expect(contentHash(solidImage(42))).toBe(contentHash(solidImage(42)));
    expect(contentHash(solidImage(42))).not.toBe(contentHash(solidImage(43)));
  });

  it("undo restores an earlier step without losing later ones", () => {
    const session = new EditSession(solidImage(10));
    runStep(session, [solidImage(20)], 0);
    runStep(session, [solidImage(30)], 0);
    session.undoTo(0);
    expect(session.steps).toHaveLength(2);
    expect(contentHash(session.nextInput())).toBe(contentHash(solidImage(20)));

    // chaining from the restore point records the branch parent
    runStep(session, [solidImage(70)], 0);
    expect(session.steps[2]!.parentIndex).toBe(0);
    expect(session.verifyChain()).toBe(true);
  });

  it("cannot chain before choosing a sample", () => {
    const session = new EditSession(solidImage(10));
    session.beginStep(someMask(), "first");
    session.recordOutputs([solidImage(20)]);
    expect(() => session.beginStep(someMask(), "second")).toThrow(
      SessionError,
    );
  });

  it("rejects out-of-range choices and empty galleries", () => {
    const session = new EditSession(solidImage(10));
    session.beginStep(someMask(), "x");
    expect(() => session.recordOutputs([])).toThrow(SessionError);
    session.recordOutputs([solidImage(20)]);
    expect(() => session.choose(3)).toThrow(SessionError);
  });

  it("export/import round-trips to an identical session", () => {
    const session = new EditSession(solidImage(10));
    runStep(session, [solidImage(20), solidImage(30)], 0);
    runStep(session, [solidImage(40)], 0);
    session.undoTo(0);

    const restored = EditSession.import(session.export());
    expect(restored.activeIndex).toBe(session.activeIndex);
    expect(restored.steps).toHaveLength(session.steps.length);
    for (let k = 0; k < session.steps.length; k++) {
      expect(restored.steps[k]!.prompt).toBe(session.steps[k]!.prompt);
      expect(restored.steps[k]!.inputPng).toEqual(session.steps[k]!.inputPng);
      expect(restored.steps[k]!.outputs).toEqual(session.steps[k]!.outputs);
      expect(restored.steps[k]!.chosenIndex).toBe(
        session.steps[k]!.chosenIndex,
      );
    }
    expect(restored.export()).toBe(session.export());
  });

  it("import rejects sessions that break the chain", () => {
    const session = new EditSession(solidImage(10));
    runStep(session, [solidImage(20)], 0);
    const data = session.toJSON();
    data.steps[0]!.input_png = Buffer.from(solidImage(99)).toString("base64");
    expect(() => EditSession.import(JSON.stringify(data))).toThrow(
      SessionError,
    );
  });
});
