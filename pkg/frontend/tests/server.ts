/** Spawn the real study service for end-to-end tests. */

import { spawn, ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

export const ADMIN_KEY = "test-admin";

export interface TestServer {
  baseUrl: string;
  stop(): void;
}

export async function startServer(): Promise<TestServer> {
  const port = 18000 + Math.floor(Math.random() * 2000);
  const script = join(
    dirname(fileURLToPath(import.meta.url)),
    "serve_test_study.py",
  );
  const proc: ChildProcess = spawn("python3", [script, String(port), ADMIN_KEY], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const res = await fetch(`${baseUrl}/admin/progress`, {
        headers: { "X-Admin-Key": ADMIN_KEY },
      });
      if (res.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error("test server did not come up within 30 s");
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  return { baseUrl, stop: () => void proc.kill() };
}
