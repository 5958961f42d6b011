// Trial presentation state machine.
//
// Each trial runs fixation (500 ms) -> stimulus (the trial's duration_ms)
// -> gray mask, and accepts the forced-choice answer from stimulus onset
// onward.  Responses before onset are ignored entirely -- nothing is
// posted -- so the record log can never contain a pre-onset reaction.
// A trial whose POST fails is discarded client-side and never re-posted.

import { wasReal } from "./api.js";
import type { ResponseChoice, SessionApi, TrialPayload } from "./api.js";

export type Phase = "idle" | "fixation" | "stimulus" | "mask" | "response" | "done";

export const FIXATION_MS = 500;
export const FRAME_MS = 1000 / 60;

// now() in ms plus a frame-aligned timer; injected so tests can run the
// machine on a virtual clock and measure presentation windows exactly.
export type Scheduler = {
  now(): number;
  after(ms: number, fn: () => void): void;
};

export const browserScheduler: Scheduler = {
  now: () => performance.now(),
  after: (ms, fn) => {
    // settle on the frame boundary nearest the deadline
    setTimeout(() => {
      if (typeof requestAnimationFrame === "function") requestAnimationFrame(() => fn());
      else fn();
    }, Math.max(0, ms - FRAME_MS / 2));
  },
};

export type SessionEvents = {
  onPhase?: (phase: Phase, trial: TrialPayload | null) => void;
  onPosted?: (trialId: string, correct: boolean) => void;
  onDiscarded?: (trialId: string, err: unknown) => void;
};

export class Session {
  phase: Phase = "idle";
  posted: { trial_id: string; response: ResponseChoice; reaction_ms: number }[] = [];
  discarded = 0;

  private trial: TrialPayload | null = null;
  private onsetAt = 0;
  private answered = new Set<string>();
  private settle: (() => void) | null = null;

  constructor(
    private api: SessionApi,
    private subjectId: string,
    private nTrials: number,
    private sched: Scheduler = browserScheduler,
    private events: SessionEvents = {},
  ) {}

  private setPhase(phase: Phase) {
    this.phase = phase;
    this.events.onPhase?.(phase, this.trial);
  }

  private wait(ms: number): Promise<void> {
    return new Promise((resolve) => this.sched.after(ms, resolve));
  }

  /** Answer the current trial.  Returns false when ignored (no stimulus
   * shown yet, or this trial already answered). */
  async respond(choice: ResponseChoice): Promise<boolean> {
    const trial = this.trial;
    if (trial === null) return false;
    if (this.phase !== "stimulus" && this.phase !== "mask" && this.phase !== "response") {
      return false; // pre-onset: not recorded anywhere
    }
    if (this.answered.has(trial.trial_id)) return false;
    this.answered.add(trial.trial_id);
    const reaction = this.sched.now() - this.onsetAt;
    try {
      const result = await this.api.respond({
        trial_id: trial.trial_id,
        response: choice,
        reaction_ms: reaction,
      });
      this.posted.push({ trial_id: trial.trial_id, response: choice, reaction_ms: reaction });
      this.events.onPosted?.(trial.trial_id, result.correct);
    } catch (err) {
      this.discarded += 1; // discarded, never re-posted
      this.events.onDiscarded?.(trial.trial_id, err);
    }
    this.settle?.();
    this.settle = null;
    return true;
  }

  private async runTrial(): Promise<void> {
    this.trial = await this.api.trial(this.subjectId);
    const done = new Promise<void>((resolve) => {
      this.settle = resolve;
    });
    this.setPhase("fixation");
    await this.wait(FIXATION_MS);
    this.onsetAt = this.sched.now();
    this.setPhase("stimulus");
    await this.wait(this.trial.duration_ms);
    this.setPhase("mask");
    if (!this.answered.has(this.trial.trial_id)) this.setPhase("response");
    await done;
    this.trial = null;
  }

  async run(): Promise<void> {
    for (let i = 0; i < this.nTrials; i++) {
      await this.runTrial();
    }
    this.setPhase("done");
  }
}

// One untimed practice reveal: fetch a trial, answer it, and use the
// correctness echo to label the image as real or generated after the
// fact.  Practice answers are stored under their own subject id so they
// never blend into the experimental cells.
export async function practiceReveal(
  api: SessionApi,
  subjectId: string,
  guess: ResponseChoice = "real",
): Promise<{ image: string; isReal: boolean }> {
  const trial = await api.trial(`${subjectId}#practice`);
  const result = await api.respond({ trial_id: trial.trial_id, response: guess });
  return { image: trial.image, isReal: wasReal(guess, result.correct) };
}
