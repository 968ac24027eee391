import { AnnotatorApp } from "./app.js";

const root = document.querySelector("#app") as HTMLElement;
const app = new AnnotatorApp({ root });
void app.start();
