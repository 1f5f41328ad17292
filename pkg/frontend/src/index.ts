export * from "./api.js";
export * from "./session.js";
export * from "./ui.js";
export * from "./admin.js";
