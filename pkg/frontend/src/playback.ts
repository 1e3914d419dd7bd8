// Frame-accurate synchronized stepping. Every pane shows the same frame
// index at all times; deliberately not a <video> element so per-frame
// color flicker stays inspectable.

export interface PlaybackOptions {
  frameCount: number;
  fps: number;
  onFrame: (index: number) => void;
  onComplete?: () => void;
}

export class PlaybackController {
  frameIndex = 0;
  playing = false;
  private intervalId: ReturnType<typeof setInterval> | null = null;

  constructor(private opts: PlaybackOptions) {
    if (opts.frameCount < 1) throw new Error("frameCount must be >= 1");
    if (opts.fps <= 0) throw new Error("fps must be > 0");
  }

  seek(index: number): void {
    const clamped = Math.min(Math.max(index, 0), this.opts.frameCount - 1);
    this.frameIndex = clamped;
    this.opts.onFrame(clamped);
  }

  step(delta = 1): void {
    this.seek(this.frameIndex + delta);
  }

  // Plays each frame once at clip rate: frameCount ticks of 1/fps each,
  // so a full pass takes frameCount/fps seconds.
  play(): void {
    if (this.playing) return;
    this.playing = true;
    this.seek(0);
    let ticks = 0;
    const periodMs = 1000 / this.opts.fps;
    this.intervalId = setInterval(() => {
      ticks += 1;
      if (ticks >= this.opts.frameCount) {
        this.pause();
        this.opts.onComplete?.();
        return;
      }
      this.step(1);
    }, periodMs);
  }

  pause(): void {
    if (this.intervalId !== null) {
      clearInterval(this.intervalId);
      this.intervalId = null;
    }
    this.playing = false;
  }

  toggle(): void {
    if (this.playing) {
      this.pause();
    } else {
      this.play();
    }
  }
}
