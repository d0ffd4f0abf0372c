const cp = require('child_process')

const handlers = {
  run(cmd) {
    return helper(cmd)
  },
  echo(text) {
    return text
  },
}

function helper(x) {
  return cp.execSync(x).toString()
}

function dispatch(action, args) {
  const handler = handlers[action]
  return handler(args)
}

module.exports = { dispatch }
