// One-card-at-a-time review flow. The queue is always re-fetched from the
// service after every action, so displayed counts mirror /api/stats and no
// candidate data is ever mutated locally. At most one decision request is
// in flight; advancing waits for the server acknowledgement.

import {
  Candidate,
  ConflictError,
  ReviewApi,
  Stats,
  Verdict,
} from "./api.js";

interface PendingSubmission {
  candidateId: string;
  verdict: Verdict;
  note?: string;
}

export class ReviewApp {
  private stats: Stats | null = null;
  private current: Candidate | null = null;
  private pendingTotal = 0;
  private positionIndex = 0;
  private skipOffset = 0;
  private inFlight = false;
  private connectionLost = false;
  private pendingSubmission: PendingSubmission | null = null;
  private started = false;

  constructor(
    private root: HTMLElement,
    private api: ReviewApi,
    private reviewer: string = "reviewer",
  ) {}

  async start(): Promise<void> {
    if (!this.started) {
      this.started = true;
      document.addEventListener("keydown", (event) => this.onKey(event));
    }
    await this.refresh();
  }

  async refresh(): Promise<void> {
    try {
      this.stats = await this.api.getStats();
      const pending = this.stats.pending;
      const offset = pending > 0 ? this.skipOffset % pending : 0;
      const page = await this.api.listPending(1, offset);
      this.pendingTotal = page.total;
      this.positionIndex = offset;
      this.current = page.items[0] ?? null;
      this.connectionLost = false;
    } catch {
      // Keep whatever is on screen (and any unsent verdict): nothing is lost.
      this.connectionLost = true;
    }
    this.render();
  }

  accept(): Promise<void> {
    return this.decide("accept");
  }

  reject(): Promise<void> {
    return this.decide("reject");
  }

  private async decide(verdict: Verdict): Promise<void> {
    if (!this.current || this.inFlight) {
      return;
    }
    const note = this.noteValue();
    await this.submit({
      candidateId: this.current.candidate_id,
      verdict,
      note: note || undefined,
    });
  }

  private async submit(submission: PendingSubmission): Promise<void> {
    this.inFlight = true;
    this.render();
    try {
      await this.api.submitDecision(
        submission.candidateId,
        submission.verdict,
        this.reviewer,
        submission.note,
      );
      this.pendingSubmission = null;
      this.skipOffset = 0;
      this.inFlight = false;
      await this.refresh();
    } catch (err) {
      this.inFlight = false;
      if (err instanceof ConflictError) {
        // Decided elsewhere; the refetch shows the authoritative state.
        this.pendingSubmission = null;
        this.skipOffset = 0;
        await this.refresh();
      } else {
        // Network failure: retain the verdict locally and offer a retry.
        // The service's idempotency makes the retry safe even if the
        // first request was applied before the connection dropped.
        this.pendingSubmission = submission;
        this.connectionLost = true;
        this.render();
      }
    }
  }

  async retry(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    if (this.pendingSubmission) {
      await this.submit(this.pendingSubmission);
    } else {
      await this.refresh();
    }
  }

  async skipCard(): Promise<void> {
    if (this.pendingTotal > 1 && !this.inFlight) {
      this.skipOffset = (this.skipOffset + 1) % this.pendingTotal;
      await this.refresh();
    }
  }

  get positionLabel(): string {
    return `${this.positionIndex + 1} of ${this.pendingTotal} pending`;
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "TEXTAREA" || target.tagName === "INPUT")) {
      return;
    }
    if (event.key === "a") {
      void this.accept();
    } else if (event.key === "r") {
      void this.reject();
    } else if (event.key === "s") {
      void this.skipCard();
    }
  }

  private noteValue(): string {
    const field = this.root.querySelector<HTMLTextAreaElement>("#note-field");
    return field ? field.value.trim() : "";
  }

  private render(): void {
    const previousNote = this.pendingSubmission ? "" : this.noteValue();
    this.root.textContent = "";
    this.root.appendChild(this.renderStats());
    if (this.connectionLost) {
      this.root.appendChild(this.renderRetryBanner());
    }
    if (this.current) {
      this.root.appendChild(this.renderCard(this.current, previousNote));
    } else if (this.stats && this.pendingTotal === 0 && !this.connectionLost) {
      this.root.appendChild(this.renderDone());
    }
  }

  private renderStats(): HTMLElement {
    const panel = el("div", "stats-panel");
    panel.id = "stats-panel";
    if (!this.stats) {
      panel.textContent = "loading";
      return panel;
    }
    const entries: Array<[string, number]> = [
      ["pending", this.stats.pending],
      ["accepted", this.stats.accepted],
      ["rejected", this.stats.rejected],
      ["auto-rejected", this.stats.auto_rejected_refusal + this.stats.auto_rejected_policy],
      ["failed", this.stats.failed],
      ["total", this.stats.total],
    ];
    for (const [label, count] of entries) {
      const item = el("span", "stat");
      item.dataset.stat = label;
      item.textContent = `${label}: ${count}`;
      panel.appendChild(item);
    }
    return panel;
  }

  private renderRetryBanner(): HTMLElement {
    const banner = el("div", "retry-banner");
    banner.id = "retry-banner";
    const label = el("span");
    label.textContent = this.pendingSubmission
      ? "Connection lost; your verdict is saved locally."
      : "Cannot reach the review service.";
    const button = el("button") as HTMLButtonElement;
    button.id = "retry-button";
    button.textContent = "Retry";
    button.addEventListener("click", () => void this.retry());
    banner.append(label, button);
    return banner;
  }

  private renderDone(): HTMLElement {
    const done = el("div", "queue-done");
    done.id = "queue-done";
    const heading = el("h2");
    heading.textContent = "Queue complete";
    const summary = el("p");
    if (this.stats) {
      summary.textContent =
        `${this.stats.accepted} accepted, ${this.stats.rejected} rejected ` +
        `out of ${this.stats.total} candidates.`;
    }
    done.append(heading, summary);
    return done;
  }

  private renderCard(candidate: Candidate, noteValue: string): HTMLElement {
    const card = el("div", "review-card");
    card.id = "review-card";
    card.dataset.candidateId = candidate.candidate_id;

    const position = el("div", "position");
    position.id = "position";
    position.textContent = this.positionLabel;
    card.appendChild(position);

    card.appendChild(sentenceBlock("original", "Original", candidate.original_sentence));
    card.appendChild(sentenceBlock("generated", "Paraphrase", candidate.generated_text));
    card.appendChild(sentenceBlock("partner", "Paired with", candidate.partner_sentence));

    const score = el("div", "score");
    score.id = "inherited-score";
    score.textContent = `inherited score: ${candidate.inherited_score.toFixed(3)}`;
    card.appendChild(score);

    const note = el("textarea") as HTMLTextAreaElement;
    note.id = "note-field";
    note.placeholder = "optional note";
    note.value = noteValue;
    card.appendChild(note);

    const controls = el("div", "controls");
    const accept = button("accept-button", "Accept (a)", () => void this.accept());
    const reject = button("reject-button", "Reject (r)", () => void this.reject());
    const skip = button("skip-button", "Skip (s)", () => void this.skipCard());
    for (const b of [accept, reject, skip]) {
      b.disabled = this.inFlight;
      controls.appendChild(b);
    }
    card.appendChild(controls);
    return card;
  }
}

function el(tag: string, className?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  return node;
}

function button(id: string, label: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.id = id;
  node.textContent = label;
  node.addEventListener("click", onClick);
  return node;
}

function sentenceBlock(kind: string, label: string, text: string): HTMLElement {
  const block = el("div", `sentence ${kind}`);
  const caption = el("div", "caption");
  caption.textContent = label;
  const body = el("div", "text");
  // dir=auto renders Arabic-script content right-to-left.
  body.setAttribute("dir", "auto");
  body.textContent = text;
  block.append(caption, body);
  return block;
}
