export * from "./types.js";
export * from "./validate.js";
export * from "./math.js";
export * from "./document.js";
export * from "./client.js";
export * from "./exporter.js";
