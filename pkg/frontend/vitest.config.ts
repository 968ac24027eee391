import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    testTimeout: 30_000,
    hookTimeout: 60_000,
    // each file drives live uvicorn instances; keep files sequential
    fileParallelism: false,
  },
});
