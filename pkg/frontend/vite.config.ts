import { defineConfig } from "vitest/config";

// The studio is served by the job service at /ui, so all asset URLs are
// relative and API calls go to the same origin. `npm run dev` proxies the
// API to a locally running service instead.
export default defineConfig({
  base: "./",
  build: {
    outDir: "dist",
    emptyOutDir: true,
  },
  server: {
    proxy: Object.fromEntries(
      ["/jobs", "/assets", "/health", "/config"].map((route) => [
        route,
        { target: "http://127.0.0.1:8765", changeOrigin: true },
      ]),
    ),
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
