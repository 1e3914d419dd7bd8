export type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

// Polls fn until done(result) holds; rejects after timeoutMs.
export async function pollUntil<T>(
  fn: () => Promise<T>,
  done: (value: T) => boolean,
  intervalMs = 500,
  timeoutMs = 120000,
  sleep: Sleep = defaultSleep,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await fn();
    if (done(value)) return value;
    if (Date.now() >= deadline) {
      throw new Error(`polling timed out after ${timeoutMs} ms`);
    }
    await sleep(intervalMs);
  }
}
