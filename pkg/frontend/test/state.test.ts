import { describe, expect, it } from "vitest";

import { SelectionState, TAG_ACCEPTABLE, TAG_MISLABELS, TAG_RETRAIN } from "../src/state.js";

describe("SelectionState", () => {
  it("starts clean, untagged, and blocked from submission", () => {
    const state = new SelectionState(3);
    expect(state.dirty).toBe(false);
    expect(state.taggedCount()).toBe(0);
    expect(state.canSubmit()).toBe(false);
    expect(state.blockers()).toContain("3 clusters still untagged");
    expect(state.blockers()).toContain("no cluster tagged Retrain");
  });

  it("marks dirty on tagging and clears on save", () => {
    const state = new SelectionState(2);
    state.setTag(0, TAG_RETRAIN);
    expect(state.dirty).toBe(true);
    state.markSaved("abc123");
    expect(state.dirty).toBe(false);
    expect(state.savedEtag).toBe("abc123");
    state.setTag(0, TAG_RETRAIN); // no-op re-tag stays clean
    expect(state.dirty).toBe(false);
    state.setTag(0, TAG_MISLABELS);
    expect(state.dirty).toBe(true);
  });

  it("blocks submission while dirty even when fully tagged", () => {
    const state = new SelectionState(2);
    state.setTag(0, TAG_RETRAIN);
    state.setTag(1, TAG_ACCEPTABLE);
    expect(state.canSubmit()).toBe(false);
    expect(state.blockers()).toEqual(["unsaved tag changes"]);
    state.markSaved("e1");
    expect(state.canSubmit()).toBe(true);
    expect(state.blockers()).toEqual([]);
  });

  it("blocks submission when no cluster is tagged Retrain", () => {
    const state = new SelectionState(2);
    state.setTag(0, TAG_ACCEPTABLE);
    state.setTag(1, TAG_MISLABELS);
    state.markSaved("e1");
    expect(state.canSubmit()).toBe(false);
    expect(state.blockers()).toEqual(["no cluster tagged Retrain"]);
  });

  it("serializes with ascending cluster keys regardless of tag order", () => {
    const state = new SelectionState(3);
    state.setTag(2, TAG_MISLABELS);
    state.setTag(0, TAG_RETRAIN);
    state.setTag(1, TAG_ACCEPTABLE);
    expect(state.serialize()).toBe(
      '{"tags":{"0":"retrain","1":"acceptable_uncertainty","2":"mislabels"}}',
    );
  });

  it("round-trips its own serialization byte for byte", () => {
    const state = new SelectionState(4);
    state.setTag(3, TAG_RETRAIN);
    state.setTag(1, TAG_ACCEPTABLE);
    const body = state.serialize();
    const restored = SelectionState.fromSaved(body, "etag9", 4);
    expect(restored.serialize()).toBe(body);
    expect(restored.dirty).toBe(false);
    expect(restored.savedEtag).toBe("etag9");
    expect(restored.tagOf(3)).toBe(TAG_RETRAIN);
    expect(restored.tagOf(0)).toBeNull();
  });

  it("drops unknown tags and out-of-range clusters when restoring", () => {
    const body = '{"tags": {"0": "retrain", "7": "retrain", "1": "nonsense"}, "cursor": 5}';
    const restored = SelectionState.fromSaved(body, null, 2);
    expect(restored.tagOf(0)).toBe(TAG_RETRAIN);
    expect(restored.tagOf(1)).toBeNull();
    expect(restored.taggedCount()).toBe(1);
  });

  it("survives a corrupt saved document", () => {
    const restored = SelectionState.fromSaved("not json", null, 2);
    expect(restored.taggedCount()).toBe(0);
  });

  it("rejects out-of-range clusters and bad counts", () => {
    const state = new SelectionState(2);
    expect(() => state.setTag(2, TAG_RETRAIN)).toThrow(/out of range/);
    expect(() => state.setTag(-1, TAG_RETRAIN)).toThrow(/out of range/);
    expect(() => new SelectionState(0)).toThrow(/bad cluster count/);
  });
});
