/** Client-side selection state: per-cluster tags, a dirty flag, and the
 * digest of the last saved document.
 *
 * The server is authoritative: this object can always be rebuilt from
 * GET /selection, and retraining is submitted against the saved document,
 * never against in-memory tags. Hence the central invariant: submission is
 * blocked while `dirty` (unsaved tags), while any cluster is untagged, or
 * while no cluster is tagged for retraining.
 */

export const TAG_RETRAIN = "retrain";
export const TAG_ACCEPTABLE = "acceptable_uncertainty";
export const TAG_MISLABELS = "mislabels";
export const TAGS = [TAG_RETRAIN, TAG_ACCEPTABLE, TAG_MISLABELS] as const;

export type Tag = (typeof TAGS)[number];

export const TAG_LABELS: Record<Tag, string> = {
  [TAG_RETRAIN]: "Retrain",
  [TAG_ACCEPTABLE]: "Acceptable",
  [TAG_MISLABELS]: "Mislabels",
};

export function isTag(value: unknown): value is Tag {
  return typeof value === "string" && (TAGS as readonly string[]).includes(value);
}

export class SelectionState {
  private tags = new Map<number, Tag>();
  dirty = false;
  savedEtag: string | null = null;

  constructor(readonly k: number) {
    if (!Number.isInteger(k) || k < 1) throw new Error(`bad cluster count ${k}`);
  }

  tagOf(cluster: number): Tag | null {
    return this.tags.get(cluster) ?? null;
  }

  setTag(cluster: number, tag: Tag): void {
    if (!Number.isInteger(cluster) || cluster < 0 || cluster >= this.k) {
      throw new Error(`cluster ${cluster} out of range for k=${this.k}`);
    }
    if (!isTag(tag)) throw new Error(`unknown tag ${tag}`);
    if (this.tags.get(cluster) === tag) return;
    this.tags.set(cluster, tag);
    this.dirty = true;
  }

  taggedCount(): number {
    return this.tags.size;
  }

  retrainCount(): number {
    let n = 0;
    for (const tag of this.tags.values()) if (tag === TAG_RETRAIN) n += 1;
    return n;
  }

  /** Human-readable reasons the retrain submission is blocked; empty when
   * submission is allowed. */
  blockers(): string[] {
    const out: string[] = [];
    const untagged = this.k - this.tags.size;
    if (untagged > 0) {
      out.push(`${untagged} cluster${untagged === 1 ? "" : "s"} still untagged`);
    }
    if (this.retrainCount() === 0) {
      out.push("no cluster tagged Retrain");
    }
    if (this.dirty) {
      out.push("unsaved tag changes");
    }
    return out;
  }

  canSubmit(): boolean {
    return this.blockers().length === 0;
  }

  /** Canonical document for POST /selection. Keys are cluster indices in
   * ascending order, so identical tags always serialize to identical bytes
   * and the server's byte-for-byte round-trip holds. */
  serialize(): string {
    const tags: Record<string, Tag> = {};
    for (const cluster of [...this.tags.keys()].sort((a, b) => a - b)) {
      tags[String(cluster)] = this.tags.get(cluster)!;
    }
    return JSON.stringify({ tags });
  }

  markSaved(etag: string | null): void {
    this.dirty = false;
    this.savedEtag = etag;
  }

  /** Rebuild from the saved selection document (the GET /selection bytes).
   * Unknown clusters and unknown tags are dropped rather than trusted. */
  static fromSaved(body: string, etag: string | null, k: number): SelectionState {
    const state = new SelectionState(k);
    let doc: unknown;
    try {
      doc = JSON.parse(body);
    } catch {
      return state;
    }
    const tags = (doc as { tags?: Record<string, unknown> }).tags;
    if (tags && typeof tags === "object") {
      for (const [key, value] of Object.entries(tags)) {
        const cluster = Number(key);
        if (Number.isInteger(cluster) && cluster >= 0 && cluster < k && isTag(value)) {
          state.tags.set(cluster, value);
        }
      }
    }
    state.dirty = false;
    state.savedEtag = etag;
    return state;
  }
}
